//! Evaluates the counting conditions on a few (n, m, a) triples of
//! standard test systems.

use sdpopf::certify::{corollary1_condition, dimension_bound, lemma1_condition};

fn main() {
    let rows = [
        ("3-bus", 3, 1, 4),
        ("5-bus", 5, 6, 3),
        ("14-bus (modified)", 14, 18, 12),
        ("39-bus", 39, 58, 14),
        ("118-bus", 118, 128, 73),
    ];
    println!("{:<20} {:>4} {:>4} {:>4} {:>10} {:>8} {:>12}", "system", "n", "m", "a", "m+a>=2n", "m>=2n", "bound r=2");
    for (name, n, m, a) in rows {
        println!(
            "{:<20} {:>4} {:>4} {:>4} {:>10} {:>8} {:>12}",
            name,
            n,
            m,
            a,
            lemma1_condition(n, m, a),
            corollary1_condition(n, m),
            dimension_bound(n, m, a, 2)
        );
    }
}
