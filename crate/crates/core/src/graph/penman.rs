//! PENMAN notation reader and writer.

use std::collections::HashMap;

use super::{GraphKind, LabeledGraph};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            b'/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            b'"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(Error::Parse {
                                offset: start,
                                msg: "unterminated string".into(),
                            })
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') if i + 1 < bytes.len() => {
                            let ch = text[i + 1..].chars().next().unwrap();
                            s.push(ch);
                            i += 1 + ch.len_utf8();
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push((start, Tok::Str(s)));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b' ' | b'\t' | b'\n' | b'\r' | b'(' | b')' | b'"')
                {
                    i += 1;
                }
                let word = &text[start..i];
                if let Some(role) = word.strip_prefix(':') {
                    if role.is_empty() {
                        return Err(Error::Parse {
                            offset: start,
                            msg: "empty role name".into(),
                        });
                    }
                    out.push((start, Tok::Role(role.to_string())));
                } else if word.contains('/') && word != "/" {
                    // `x/concept` without spaces
                    let (var, concept) = word.split_once('/').unwrap();
                    if !var.is_empty() {
                        out.push((start, Tok::Sym(var.to_string())));
                    }
                    out.push((start + var.len(), Tok::Slash));
                    if !concept.is_empty() {
                        out.push((start + var.len() + 1, Tok::Sym(concept.to_string())));
                    }
                } else {
                    out.push((start, Tok::Sym(word.to_string())));
                }
            }
        }
    }
    Ok(out)
}

/// Variables look like `b`, `b2`, `xx3`; other bare symbols are constants.
fn looks_like_variable(sym: &str) -> bool {
    let letters = sym.chars().take_while(|c| c.is_ascii_lowercase()).count();
    (1..=2).contains(&letters) && sym[letters..].chars().all(|c| c.is_ascii_digit())
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
    g: LabeledGraph,
    vars: HashMap<String, usize>,
    pending: Vec<(usize, String, String, usize)>,
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let offset = self.offset();
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::Parse {
                offset,
                msg: format!("expected {what}, found {t:?}"),
            }),
            None => Err(Error::Parse {
                offset,
                msg: format!("unbalanced parentheses: expected {what} before end of input"),
            }),
        }
    }

    fn edge(&mut self, src: usize, dst: usize, role: &str) -> Result<()> {
        if src == dst {
            return Err(Error::Semantic(format!(
                "node `{}` refers to itself through :{role}",
                self.g.label(src)
            )));
        }
        self.g
            .add_edge(src, dst, role)
            .map_err(|e| Error::Semantic(e.to_string()))
    }

    fn node(&mut self, parent: Option<(usize, String)>) -> Result<usize> {
        self.expect(Tok::Open, "`(`")?;
        let offset = self.offset();
        let var = match self.next() {
            Some(Tok::Sym(v)) => v,
            other => {
                return Err(Error::Parse {
                    offset,
                    msg: format!("expected variable, found {other:?}"),
                })
            }
        };
        self.expect(Tok::Slash, "`/`")?;
        let offset = self.offset();
        let concept = match self.next() {
            Some(Tok::Sym(c)) | Some(Tok::Str(c)) => c,
            other => {
                return Err(Error::Parse {
                    offset,
                    msg: format!("expected concept, found {other:?}"),
                })
            }
        };
        let id = self.g.add_node(concept).map_err(|e| Error::Parse {
            offset,
            msg: e.to_string(),
        })?;
        if self.vars.insert(var.clone(), id).is_some() {
            return Err(Error::Semantic(format!("variable `{var}` is defined twice")));
        }
        if let Some((src, role)) = parent {
            self.edge(src, id, &role)?;
        }
        loop {
            let offset = self.offset();
            match self.next() {
                Some(Tok::Close) => return Ok(id),
                Some(Tok::Role(role)) => match self.peek() {
                    Some(Tok::Open) => {
                        self.node(Some((id, role)))?;
                    }
                    Some(Tok::Str(_)) => {
                        let Some(Tok::Str(s)) = self.next() else { unreachable!() };
                        let c = self.g.add_node(s).map_err(|e| Error::Parse {
                            offset,
                            msg: e.to_string(),
                        })?;
                        self.edge(id, c, &role)?;
                    }
                    Some(Tok::Sym(_)) => {
                        let Some(Tok::Sym(s)) = self.next() else { unreachable!() };
                        if let Some(&target) = self.vars.get(&s) {
                            self.edge(id, target, &role)?;
                        } else if looks_like_variable(&s) {
                            self.pending.push((id, role, s, offset));
                        } else {
                            let c = self.g.add_node(s).map_err(|e| Error::Parse {
                                offset,
                                msg: e.to_string(),
                            })?;
                            self.edge(id, c, &role)?;
                        }
                    }
                    _ => {
                        return Err(Error::Parse {
                            offset: self.offset(),
                            msg: format!("role :{role} has no value"),
                        })
                    }
                },
                Some(t) => {
                    return Err(Error::Parse {
                        offset,
                        msg: format!("expected role or `)`, found {t:?}"),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        offset,
                        msg: "unbalanced parentheses: missing `)`".into(),
                    })
                }
            }
        }
    }
}

/// Parses a single PENMAN graph. Re-used variables become reentrant edges.
pub fn parse_penman(text: &str) -> Result<LabeledGraph> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
        g: LabeledGraph::new(GraphKind::Amr),
        vars: HashMap::new(),
        pending: Vec::new(),
    };
    let root = p.node(None)?;
    if p.pos < toks.len() {
        return Err(Error::Parse {
            offset: toks[p.pos].0,
            msg: "unbalanced parentheses: trailing input after the graph".into(),
        });
    }
    for (src, role, var, _) in std::mem::take(&mut p.pending) {
        let Some(&dst) = p.vars.get(&var) else {
            return Err(Error::Semantic(format!("undefined variable `{var}`")));
        };
        p.edge(src, dst, &role)?;
    }
    p.g.set_root(root)?;
    p.g.validate()?;
    Ok(p.g)
}

/// One graph of a PENMAN document with its reference sentence.
#[derive(Debug)]
pub struct PenmanEntry {
    /// 1-based line on which the block starts.
    pub line: usize,
    pub id: Option<String>,
    pub sentence: Option<String>,
    pub graph: Result<LabeledGraph>,
}

/// Splits a document into blank-line-separated blocks. `# ::snt` and
/// `# ::id` metadata lines supply the reference sentence and identifier.
pub fn parse_penman_document(text: &str) -> Vec<PenmanEntry> {
    let mut entries = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut start = 0;
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().chain(std::iter::once(&"")).enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                entries.extend(parse_block(&block, start + 1));
                block.clear();
            }
            continue;
        }
        if block.is_empty() {
            start = i;
        }
        block.push(line);
    }
    entries
}

fn meta<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.trim_start().strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix(key)?;
    Some(rest.trim())
}

/// `None` for comment-only blocks.
fn parse_block(lines: &[&str], line: usize) -> Option<PenmanEntry> {
    let mut sentence = None;
    let mut id = None;
    let mut body = String::new();
    for l in lines {
        if l.trim_start().starts_with('#') {
            if let Some(s) = meta(l, "::snt") {
                sentence = Some(s.to_string());
            } else if let Some(s) = meta(l, "::id") {
                id = Some(s.split_whitespace().next().unwrap_or("").to_string());
            }
        } else {
            body.push_str(l);
            body.push('\n');
        }
    }
    if body.trim().is_empty() {
        return None;
    }
    Some(PenmanEntry {
        line,
        id,
        sentence,
        graph: parse_penman(&body),
    })
}

fn needs_quotes(label: &str) -> bool {
    label
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"' | '/' | ':'))
}

fn quote(label: &str) -> String {
    if needs_quotes(label) {
        format!("\"{}\"", label.replace('\\', "\\\\").replace('"', "\\\""))
    } else {
        label.to_string()
    }
}

/// Writes an unaugmented graph in PENMAN notation. Every node must be
/// reachable from the root along edge direction.
pub fn render_penman(g: &LabeledGraph) -> Result<String> {
    if g.is_augmented() {
        return Err(Error::Graph("render_penman expects an unaugmented graph".into()));
    }
    let n = g.len();
    let mut out_edges = vec![Vec::new(); n];
    for e in g.edges() {
        out_edges[e.src].push(e);
    }
    let mut names: Vec<Option<String>> = vec![None; n];
    let mut used = HashMap::<String, usize>::new();
    let mut out = String::new();

    fn visit(
        g: &LabeledGraph,
        v: usize,
        out_edges: &[Vec<&super::EdgeRecord>],
        names: &mut Vec<Option<String>>,
        used: &mut HashMap<String, usize>,
        out: &mut String,
    ) {
        let stem = g
            .label(v)
            .chars()
            .next()
            .filter(|c| c.is_ascii_lowercase())
            .unwrap_or('x')
            .to_string();
        let count = used.entry(stem.clone()).or_insert(0);
        *count += 1;
        let name = if *count == 1 { stem } else { format!("{stem}{count}") };
        out.push('(');
        out.push_str(&name);
        out.push_str(" / ");
        out.push_str(&quote(g.label(v)));
        names[v] = Some(name);
        for e in &out_edges[v] {
            out.push_str(" :");
            out.push_str(&e.label);
            out.push(' ');
            match &names[e.dst] {
                Some(name) => out.push_str(name),
                None => visit(g, e.dst, out_edges, names, used, out),
            }
        }
        out.push(')');
    }

    visit(g, g.root(), &out_edges, &mut names, &mut used, &mut out);
    if names.iter().any(Option::is_none) {
        return Err(Error::Graph(
            "render_penman needs every node reachable from the root".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::graph_stats;

    #[test]
    fn minimal_two_node_graph() {
        let g = parse_penman("(w / want-01 :ARG0 (b / boy))").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.label(g.root()), "want-01");
        let e = &g.edges()[0];
        assert_eq!((g.label(e.src), g.label(e.dst), e.label.as_str()), ("want-01", "boy", "ARG0"));
    }

    #[test]
    fn reentrancy_does_not_duplicate_nodes() {
        let g = parse_penman(crate::graph::BOY_WANTS_AMR).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.edges().len(), 4);
        let boy = g.nodes().iter().find(|n| n.label == "boy").unwrap().id;
        assert_eq!(g.edges().iter().filter(|e| e.dst == boy).count(), 2);
        assert_eq!(graph_stats(&g).reentrancies, 1);
    }

    #[test]
    fn self_reference_is_a_semantic_error() {
        assert!(matches!(parse_penman("(a / a :ARG0 a)"), Err(Error::Semantic(_))));
    }

    #[test]
    fn undefined_variable_is_a_semantic_error() {
        let err = parse_penman("(w / want-01 :ARG0 b)").unwrap_err();
        assert!(matches!(err, Error::Semantic(ref m) if m.contains("`b`")), "{err}");
    }

    #[test]
    fn forward_references_resolve() {
        let g = parse_penman("(w / want-01 :ARG0 b :ARG1 (b / boy))").unwrap();
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn unbalanced_parentheses_report_offset() {
        match parse_penman("(w / want-01 :ARG0 (b / boy)") {
            Err(Error::Parse { offset, msg }) => {
                assert_eq!(offset, 28);
                assert!(msg.contains("unbalanced"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_penman("(w / want-01))"),
            Err(Error::Parse { offset: 13, .. })
        ));
    }

    #[test]
    fn constants_become_nodes() {
        let g = parse_penman(
            r#"(p / person :name (n / name :op1 "Barack" :op2 "Obama") :polarity - :quant 5)"#,
        )
        .unwrap();
        let labels: Vec<_> = g.nodes().iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, ["person", "name", "Barack", "Obama", "-", "5"]);
    }

    #[test]
    fn document_blocks_and_sentences() {
        let doc = "# ::id a.1\n# ::snt The boy wants the girl to believe him.\n(w / want-01 :ARG0 (b / boy) :ARG1 (b2 / believe-01 :ARG0 (g / girl) :ARG1 b))\n\n# ::snt broken\n(x / y\n\n# ::snt ok\n(d / dog)\n";
        let entries = parse_penman_document(doc);
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].id.as_deref(), Some("a.1"));
        assert_eq!(
            entries[0].sentence.as_deref(),
            Some("The boy wants the girl to believe him.")
        );
        assert!(entries[1].graph.is_err());
        assert_eq!(entries[2].line, 8);
        assert!(entries[2].graph.is_ok());
    }

    #[test]
    fn render_round_trip() {
        let g = parse_penman(crate::graph::BOY_WANTS_AMR).unwrap();
        let text = render_penman(&g).unwrap();
        assert_eq!(parse_penman(&text).unwrap(), g);
        let quoted = parse_penman(r#"(n / name :op1 "New York")"#).unwrap();
        assert_eq!(parse_penman(&render_penman(&quoted).unwrap()).unwrap(), quoted);
    }
}
