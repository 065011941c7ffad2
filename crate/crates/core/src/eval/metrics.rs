//! Corpus BLEU-4 and chrF++ over whitespace-tokenized text.

use std::collections::HashMap;
use std::hash::Hash;

use crate::{Error, Result};

const BLEU_ORDER: usize = 4;
const CHAR_ORDER: usize = 6;
const WORD_ORDER: usize = 2;
const BETA: f64 = 2.0;
const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn check_lengths(hyps: &[String], refs: &[String]) -> Result<()> {
    if hyps.is_empty() {
        return Err(Error::Data("cannot score an empty corpus".into()));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    Ok(())
}

fn counts<T: Eq + Hash + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// `(hyp total, ref total, clipped matches)` for one n-gram order.
fn overlap<T: Eq + Hash + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = counts(hyp, n);
    let r = counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (h.values().sum(), r.values().sum(), matched)
}

/// Corpus BLEU-4 without smoothing, in `[0, 100]`. Case is folded unless
/// `case_sensitive`.
pub fn bleu(hyps: &[String], refs: &[String], case_sensitive: bool) -> Result<f64> {
    check_lengths(hyps, refs)?;
    let norm = |s: &str| {
        let s = if case_sensitive { s.to_string() } else { s.to_lowercase() };
        s.split_whitespace().map(str::to_string).collect::<Vec<_>>()
    };
    let mut matched = [0usize; BLEU_ORDER];
    let mut total = [0usize; BLEU_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (norm(h), norm(r));
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=BLEU_ORDER {
            let (t, _, m) = overlap(&h, &r, n);
            total[n - 1] += t;
            matched[n - 1] += m;
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_prec: f64 = (0..BLEU_ORDER)
        .map(|k| (matched[k] as f64 / total[k] as f64).ln())
        .sum::<f64>()
        / BLEU_ORDER as f64;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_prec.exp())
}

/// Words with one leading or trailing punctuation mark split off.
fn chrf_words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in s.split_whitespace() {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() == 1 {
            out.push(w.to_string());
        } else if PUNCT.contains(chars[chars.len() - 1]) {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if PUNCT.contains(chars[0]) {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

type Stats = [(usize, usize, usize); CHAR_ORDER + WORD_ORDER];

fn chrf_stats(hyp: &str, reference: &str) -> Stats {
    let mut st = [(0, 0, 0); CHAR_ORDER + WORD_ORDER];
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let (hw, rw) = (chrf_words(hyp), chrf_words(reference));
    for n in 1..=CHAR_ORDER {
        st[n - 1] = overlap(&hc, &rc, n);
    }
    for n in 1..=WORD_ORDER {
        st[CHAR_ORDER + n - 1] = overlap(&hw, &rw, n);
    }
    // hypothesis n-grams only count where the reference has some
    for s in &mut st {
        if s.1 == 0 {
            s.0 = 0;
        }
    }
    st
}

/// F-beta of precision and recall averaged over the orders that both
/// sides populate.
fn chrf_score(st: &Stats) -> f64 {
    let (mut p, mut r, mut k) = (0.0, 0.0, 0);
    for &(h, rf, m) in st {
        if h > 0 && rf > 0 {
            p += m as f64 / h as f64;
            r += m as f64 / rf as f64;
            k += 1;
        }
    }
    if k == 0 {
        return 0.0;
    }
    let (p, r) = (p / k as f64, r / k as f64);
    if p + r == 0.0 {
        return 0.0;
    }
    let b2 = BETA * BETA;
    100.0 * (1.0 + b2) * p * r / (b2 * p + r)
}

/// Corpus chrF++ (character 6-grams, word bigrams, beta 2) in `[0, 100]`.
pub fn chrf_pp(hyps: &[String], refs: &[String]) -> Result<f64> {
    check_lengths(hyps, refs)?;
    let mut total: Stats = [(0, 0, 0); CHAR_ORDER + WORD_ORDER];
    for (h, r) in hyps.iter().zip(refs) {
        for (t, s) in total.iter_mut().zip(chrf_stats(h, r)) {
            t.0 += s.0;
            t.1 += s.1;
            t.2 += s.2;
        }
    }
    Ok(chrf_score(&total))
}

/// chrF++ of a single sentence pair.
pub fn sentence_chrf_pp(hyp: &str, reference: &str) -> f64 {
    chrf_score(&chrf_stats(hyp, reference))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    ChrfPp,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "chrfpp" | "chrf++" => Ok(Metric::ChrfPp),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Scores a corpus. Case folding applies to BLEU only.
pub fn score(metric: Metric, hyps: &[String], refs: &[String], case_sensitive: bool) -> Result<f64> {
    match metric {
        Metric::Bleu => bleu(hyps, refs, case_sensitive),
        Metric::ChrfPp => chrf_pp(hyps, refs),
    }
}
