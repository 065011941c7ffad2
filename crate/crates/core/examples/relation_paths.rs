// Shortest relation paths between every ordered node pair and the
// training-time path sampling.

use graph_transformer::graph::{parse_penman, BOY_WANTS_AMR};
use graph_transformer::relpath::{all_shortest_paths, dedup_paths, select_paths, Mode, PathConfig};

pub fn run_example() -> graph_transformer::Result<()> {
    let g = parse_penman(BOY_WANTS_AMR)?.augment()?;
    let table = all_shortest_paths(&g, PathConfig::default())?;
    for i in 0..table.n() {
        for j in 0..table.n() {
            if i != j {
                println!(
                    "{:>10} -> {:<10} {} hop(s) {:?}",
                    g.label(i),
                    g.label(j),
                    table.hops(i, j),
                    table.paths(i, j)
                );
            }
        }
    }

    // training samples one path per pair, test time averages all of them
    let train = select_paths(&table, Mode::Train, 7);
    let test = select_paths(&table, Mode::Test, 7);
    let batch = dedup_paths(&[(&table, &train), (&table, &test)]);
    println!("{} distinct paths across a batch of two copies", batch.unique.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
