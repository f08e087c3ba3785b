//! Regenerates `data/lattice_z.txt`:
//! `cargo run --release -p mluq-core --example gen_lattice > crates/core/data/lattice_z.txt`

use mluq::estimators::lattice::{LatticeRule, DEFAULT_CANDIDATES, DEFAULT_CBC_SEED, DEFAULT_LOG2_N};

fn main() {
    let rule = LatticeRule::cbc(250, DEFAULT_LOG2_N, DEFAULT_CANDIDATES, DEFAULT_CBC_SEED);
    print!("{}", rule.to_text(DEFAULT_LOG2_N, DEFAULT_CANDIDATES, DEFAULT_CBC_SEED));
}
