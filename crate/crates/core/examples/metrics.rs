// Corpus BLEU and chrF++ on a handful of sentences, plus sentence-level
// chrF++ as used by the binned analysis.

use graph_transformer::eval::{score, sentence_chrf_pp, Metric};

pub fn run_example() -> graph_transformer::Result<()> {
    let refs: Vec<String> = [
        "the boy wants the girl to believe him .",
        "a tall girl sees the old house",
        "the cat likes the dog",
    ]
    .map(String::from)
    .to_vec();
    let hyps: Vec<String> = [
        "the boy wants the girl to believe him .",
        "The tall girl sees an old house",
        "the cat likes dogs",
    ]
    .map(String::from)
    .to_vec();

    println!(
        "BLEU {:.2}, case-insensitive {:.2}",
        score(Metric::Bleu, &hyps, &refs, true)?,
        score(Metric::Bleu, &hyps, &refs, false)?
    );
    println!("chrF++ {:.2}", score(Metric::ChrfPp, &hyps, &refs, true)?);
    for (h, r) in hyps.iter().zip(&refs) {
        println!("{:>6.2}  {h}", sentence_chrf_pp(h, r));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
