//! CoNLL-U sentence reader producing dependency graphs.

use super::{GraphKind, LabeledGraph};
use crate::{Error, Result};

/// `lines` carry their 1-based line numbers for error reporting.
fn parse_sentence(lines: &[(usize, &str)]) -> Result<LabeledGraph> {
    let mut tokens: Vec<(String, usize, String, usize)> = Vec::new();
    for &(line, text) in lines {
        if text.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = if text.contains('\t') {
            text.split('\t').collect()
        } else {
            text.split_whitespace().collect()
        };
        let (id, form, head, deprel) = match cols.len() {
            10 => (cols[0], cols[1], cols[6], cols[7]),
            4 => (cols[0], cols[1], cols[2], cols[3]),
            n => {
                return Err(Error::Format {
                    line,
                    msg: format!("expected 10 (or 4) columns, found {n}"),
                })
            }
        };
        // multiword token ranges and empty nodes carry no tree edge
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| Error::Format {
            line,
            msg: format!("bad token id `{id}`"),
        })?;
        if id != tokens.len() + 1 {
            return Err(Error::Format {
                line,
                msg: format!("token ids must be 1, 2, ...; found {id}"),
            });
        }
        let head: usize = head.parse().map_err(|_| Error::Format {
            line,
            msg: format!("bad HEAD `{head}`"),
        })?;
        if form.is_empty() {
            return Err(Error::Format {
                line,
                msg: "empty FORM".into(),
            });
        }
        tokens.push((form.to_string(), head, deprel.to_string(), line));
    }
    let first_line = lines.first().map(|l| l.0).unwrap_or(0);
    if tokens.is_empty() {
        return Err(Error::Format {
            line: first_line,
            msg: "sentence has no tokens".into(),
        });
    }
    let n = tokens.len();
    let roots: Vec<usize> = (0..n).filter(|&i| tokens[i].1 == 0).collect();
    match roots.len() {
        1 => {}
        0 => {
            return Err(Error::Format {
                line: first_line,
                msg: "no token has HEAD 0".into(),
            })
        }
        _ => {
            return Err(Error::Format {
                line: tokens[roots[1]].3,
                msg: format!("{} tokens have HEAD 0", roots.len()),
            })
        }
    }
    for (i, t) in tokens.iter().enumerate() {
        if t.1 > n {
            return Err(Error::Format {
                line: t.3,
                msg: format!("HEAD {} outside the sentence", t.1),
            });
        }
        // follow heads to the root; more than n steps means a cycle
        let mut cur = i + 1;
        for _ in 0..=n {
            cur = tokens[cur - 1].1;
            if cur == 0 {
                break;
            }
        }
        if cur != 0 {
            return Err(Error::Format {
                line: t.3,
                msg: format!("HEAD chain from token {} is cyclic", i + 1),
            });
        }
    }
    let mut g = LabeledGraph::new(GraphKind::Dependency);
    for t in &tokens {
        g.add_node(t.0.clone())?;
    }
    for (i, t) in tokens.iter().enumerate() {
        if t.1 != 0 {
            g.add_edge(t.1 - 1, i, t.2.clone())
                .map_err(|e| Error::Format {
                    line: t.3,
                    msg: e.to_string(),
                })?;
        }
    }
    g.set_root(roots[0])?;
    g.validate()?;
    Ok(g)
}

/// Parses a single CoNLL-U sentence block.
pub fn parse_conllu(text: &str) -> Result<LabeledGraph> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    parse_sentence(&lines)
}

#[derive(Debug)]
pub struct ConlluSentence {
    pub line: usize,
    pub text: Option<String>,
    /// Reference output from a `# target = ...` comment.
    pub target: Option<String>,
    pub graph: Result<LabeledGraph>,
}

/// Splits a CoNLL-U file into sentences at blank lines.
pub fn parse_conllu_document(text: &str) -> Vec<ConlluSentence> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let flush = |block: &mut Vec<(usize, &str)>, out: &mut Vec<ConlluSentence>| {
        if block.iter().any(|(_, l)| !l.trim_start().starts_with('#')) {
            let comment = |key: &str| {
                block.iter().find_map(|(_, l)| {
                    let rest = l.trim_start().strip_prefix('#')?.trim_start();
                    let rest = rest.strip_prefix(key)?.trim_start().strip_prefix('=')?;
                    Some(rest.trim().to_string())
                })
            };
            out.push(ConlluSentence {
                line: block[0].0,
                text: comment("text"),
                target: comment("target"),
                graph: parse_sentence(block),
            });
        }
        block.clear();
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, &mut out);
        } else {
            block.push((i + 1, line));
        }
    }
    flush(&mut block, &mut out);
    out
}
