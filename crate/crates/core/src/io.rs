//! Text file formats.
//!
//! * adjacency-text: each graph is `N` lines of `N` whitespace-separated
//!   `0`/`1` values; graphs are separated by one or more blank lines.
//! * edge-list: each graph starts with a header `graph <id> n=<N>` followed
//!   by lines `i j` with 1-based node indices, `i != j`.
//! * partition CSV: one 1-based cluster label per line.
//! * coordinates: one line per node, whitespace-separated floats.
//!
//! Lines starting with `#` are comments in every format.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPopulation, MAX_NODES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GraphFormat {
    #[default]
    AdjacencyText,
    EdgeList,
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" | "adjacency-text" | "adj" => Ok(GraphFormat::AdjacencyText),
            "edge-list" | "edgelist" | "edges" => Ok(GraphFormat::EdgeList),
            other => Err(Error::invalid(format!("unknown graph format {other:?}"))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

pub fn read_population(path: &Path, format: GraphFormat) -> Result<GraphPopulation> {
    let text = read_text(path)?;
    match format {
        GraphFormat::AdjacencyText => parse_adjacency(path, &text),
        GraphFormat::EdgeList => parse_edge_list(path, &text),
    }
}

pub fn parse_adjacency(path: &Path, text: &str) -> Result<GraphPopulation> {
    // Collect blocks of (line number, row) separated by blank lines.
    let mut blocks: Vec<Vec<(usize, Vec<u8>)>> = Vec::new();
    let mut current: Vec<(usize, Vec<u8>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if is_comment(line) {
            continue;
        }
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| match tok {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::parse(path, lineno, format!("expected 0 or 1, found {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        current.push((lineno, row));
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let mut graphs = Vec::with_capacity(blocks.len());
    for block in blocks {
        let n = block.len();
        let first_line = block[0].0;
        if n > MAX_NODES {
            return Err(Error::parse(path, first_line, format!("{n} nodes exceeds limit {MAX_NODES}")));
        }
        for (lineno, row) in &block {
            if row.len() != n {
                return Err(Error::parse(
                    path,
                    *lineno,
                    format!("row has {} entries, expected {n} (square matrix)", row.len()),
                ));
            }
        }
        let mut g = Graph::empty(n);
        for i in 0..n {
            let (lineno, row) = &block[i];
            if row[i] != 0 {
                return Err(Error::parse(path, *lineno, format!("nonzero diagonal entry at node {}", i + 1)));
            }
            for j in 0..i {
                if row[j] != block[j].1[i] {
                    return Err(Error::parse(
                        path,
                        *lineno,
                        format!("asymmetric adjacency at ({}, {})", i + 1, j + 1),
                    ));
                }
                if row[j] == 1 {
                    g.set_edge(i, j, true);
                }
            }
        }
        graphs.push(g);
    }
    GraphPopulation::new(graphs).map_err(|e| match e {
        Error::DimensionMismatch { expected, found } => Error::parse(
            path,
            0,
            format!("graphs disagree on node count ({expected} vs {found})"),
        ),
        Error::Empty(_) => Error::parse(path, 0, "no graphs found"),
        other => other,
    })
}

pub fn parse_edge_list(path: &Path, text: &str) -> Result<GraphPopulation> {
    let mut graphs = Vec::new();
    let mut current: Option<Graph> = None;
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_comment(trimmed) {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks[0] == "graph" {
            if toks.len() != 3 {
                return Err(Error::parse(path, lineno, "header must be `graph <id> n=<N>`"));
            }
            let n: usize = toks[2]
                .strip_prefix("n=")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, lineno, format!("bad node count {:?}", toks[2])))?;
            if n == 0 || n > MAX_NODES {
                return Err(Error::parse(path, lineno, format!("node count {n} outside 1..={MAX_NODES}")));
            }
            if let Some(g) = current.take() {
                graphs.push(g);
            }
            current = Some(Graph::empty(n));
            continue;
        }
        let g = current
            .as_mut()
            .ok_or_else(|| Error::parse(path, lineno, "edge line before any `graph` header"))?;
        if toks.len() != 2 {
            return Err(Error::parse(path, lineno, format!("unknown directive {:?}", toks[0])));
        }
        let parse_node = |tok: &str| -> Result<usize> {
            let v: usize = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("unknown directive {tok:?}")))?;
            if v == 0 || v > g.n_nodes() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("node {v} outside 1..={}", g.n_nodes()),
                ));
            }
            Ok(v - 1)
        };
        let i = parse_node(toks[0])?;
        let j = parse_node(toks[1])?;
        if i == j {
            return Err(Error::parse(path, lineno, format!("self-loop on node {}", i + 1)));
        }
        g.set_edge(i, j, true);
    }
    if let Some(g) = current {
        graphs.push(g);
    }
    GraphPopulation::new(graphs).map_err(|e| match e {
        Error::DimensionMismatch { expected, found } => Error::parse(
            path,
            0,
            format!("graphs disagree on node count ({expected} vs {found})"),
        ),
        Error::Empty(_) => Error::parse(path, 0, "no graphs found"),
        other => other,
    })
}

pub fn format_adjacency<'a, I: IntoIterator<Item = &'a Graph>>(graphs: I) -> String {
    let mut out = String::new();
    for (k, g) in graphs.into_iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let n = g.n_nodes();
        for i in 0..n {
            let row: Vec<&str> = (0..n)
                .map(|j| if g.has_edge(i, j) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn format_edge_list<'a, I: IntoIterator<Item = &'a Graph>>(graphs: I) -> String {
    let mut out = String::new();
    for (k, g) in graphs.into_iter().enumerate() {
        out.push_str(&format!("graph {} n={}\n", k + 1, g.n_nodes()));
        for (hi, lo) in g.edges() {
            out.push_str(&format!("{} {}\n", hi + 1, lo + 1));
        }
    }
    out
}

pub fn write_population<'a, I>(path: &Path, graphs: I, format: GraphFormat) -> Result<()>
where
    I: IntoIterator<Item = &'a Graph>,
{
    let text = match format {
        GraphFormat::AdjacencyText => format_adjacency(graphs),
        GraphFormat::EdgeList => format_edge_list(graphs),
    };
    write_text(path, &text)
}

/// Read 1-based labels, one per line. Labels are returned 0-based as given
/// (not compacted); an optional `label` header line is skipped.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let t = line.trim();
        if t.is_empty() || is_comment(t) || (lineno == 1 && t.eq_ignore_ascii_case("label")) {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad label {t:?}")))?;
        if v == 0 {
            return Err(Error::parse(path, lineno, "labels are 1-based"));
        }
        labels.push(v - 1);
    }
    if labels.is_empty() {
        return Err(Error::parse(path, 0, "no labels found"));
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&format!("{}\n", l + 1));
    }
    write_text(path, &out)
}

/// Node coordinates, one row per node. All rows must share a dimension.
pub fn read_coords(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let t = line.trim();
        if t.is_empty() || is_comment(t) {
            continue;
        }
        let row = t
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, lineno, format!("bad coordinate {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(path, lineno, "inconsistent coordinate dimension"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "no coordinates found"));
    }
    Ok(rows)
}

pub(crate) fn write_string(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub(crate) fn read_string(path: &Path) -> Result<String> {
    read_text(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn two_adjacency_graphs() {
        let text = "0 1 0\n1 0 1\n0 1 0\n\n0 0 0\n0 0 0\n0 0 0\n";
        let pop = parse_adjacency(p(), text).unwrap();
        assert_eq!(pop.len(), 2);
        assert_eq!(pop.n_nodes(), 3);
        assert_eq!(pop.get(0).edge_count(), 2);
    }

    #[test]
    fn asymmetric_and_diagonal_rejected() {
        let asym = "0 1 0\n0 0 0\n0 0 0\n";
        match parse_adjacency(p(), asym) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_adjacency(p(), "1 0\n0 0\n").is_err());
        assert!(parse_adjacency(p(), "0 1 0\n1 0\n0 0 0\n").is_err());
    }

    #[test]
    fn edge_list_bounds() {
        let ok = "graph 1 n=3\n1 2\n3 2\n";
        let pop = parse_edge_list(p(), ok).unwrap();
        assert!(pop.get(0).has_edge(0, 1));
        assert!(pop.get(0).has_edge(1, 2));
        assert!(parse_edge_list(p(), "graph 1 n=3\n1 4\n").is_err());
        assert!(parse_edge_list(p(), "graph 1 n=3\n2 2\n").is_err());
        assert!(parse_edge_list(p(), "graph 1 n=3\nnode 1 2\n").is_err());
        assert!(parse_edge_list(p(), "1 2\n").is_err());
    }

    #[test]
    fn formats_round_trip() {
        let graphs = vec![
            Graph::from_edges(5, [(0, 1), (3, 4), (2, 0)]).unwrap(),
            Graph::empty(5),
            Graph::complete(5),
        ];
        let adj = parse_adjacency(p(), &format_adjacency(&graphs)).unwrap();
        assert_eq!(adj.graphs(), &graphs[..]);
        let el = parse_edge_list(p(), &format_edge_list(&graphs)).unwrap();
        assert_eq!(el.graphs(), &graphs[..]);
    }
}
