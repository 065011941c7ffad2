// Parses a PENMAN graph and a CoNLL-U tree, then shows what augmentation
// adds: reverse edges, self loops and the global node.
//
// ```bash
// cargo run --example parse_and_augment
// ```

use graph_transformer::graph::{absolute_positions, graph_stats, parse_conllu, parse_penman, render_penman};

const AMR: &str = "(w / want-01 :ARG0 (b / boy) :ARG1 (b2 / believe-01 :ARG0 (g / girl) :ARG1 b))";

const CONLLU: &str = "\
1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tsat\tsit\tVERB\t_\t_\t0\troot\t_\t_
";

pub fn run_example() -> graph_transformer::Result<()> {
    let g = parse_penman(AMR)?;
    let stats = graph_stats(&g);
    println!(
        "{} nodes, {} edges, diameter {}, {} reentrant node(s)",
        g.len(),
        g.edges().len(),
        stats.diameter,
        stats.reentrancies
    );
    for e in g.edges() {
        println!("  {} -{}-> {}", g.label(e.src), e.label, g.label(e.dst));
    }

    let aug = g.augment()?;
    println!(
        "augmented: {} nodes, {} edges, global node {:?}",
        aug.len(),
        aug.edges().len(),
        aug.global_node()
    );
    println!("positions: {:?}", absolute_positions(&aug));
    println!("round trip:\n{}", render_penman(&g)?);

    let tree = parse_conllu(CONLLU)?;
    let labels: Vec<&str> = tree.nodes().iter().map(|n| n.label.as_str()).collect();
    println!("dependency tree {:?}, diameter {}", labels, graph_stats(&tree).diameter);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
