use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Mark, MixedGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Dot,
    Graphml,
    Edgecsv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Format::Dot),
            "graphml" => Ok(Format::Graphml),
            "edgecsv" | "edge_csv" | "csv" => Ok(Format::Edgecsv),
            other => Err(Error::Config(format!("unknown graph format `{other}`"))),
        }
    }
}

/// Deterministic text rendering. Edges are emitted in `(source, target)`
/// index order; undirected edges are written once, lower index first.
pub fn serialize(g: &MixedGraph, format: Format) -> String {
    match format {
        Format::Dot => to_dot(g),
        Format::Graphml => to_graphml(g),
        Format::Edgecsv => to_edge_csv(g),
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(g: &MixedGraph) -> String {
    let mut out = String::from("digraph G {\n");
    for name in g.names() {
        let _ = writeln!(out, "  {};", dot_quote(name));
    }
    for e in g.edges() {
        let (a, b) = (dot_quote(g.name(e.a)), dot_quote(g.name(e.b)));
        match e.mark {
            Mark::Directed => {
                let _ = writeln!(out, "  {a} -> {b};");
            }
            Mark::Undirected => {
                let _ = writeln!(out, "  {a} -> {b} [dir=none];");
            }
        }
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn to_graphml(g: &MixedGraph) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    out.push_str("  <key id=\"directed\" for=\"edge\" attr.name=\"directed\" attr.type=\"boolean\"/>\n");
    out.push_str("  <graph id=\"G\" edgedefault=\"directed\">\n");
    for name in g.names() {
        let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(name));
    }
    for e in g.edges() {
        let _ = writeln!(
            out,
            "    <edge source=\"{}\" target=\"{}\"><data key=\"directed\">{}</data></edge>",
            xml_escape(g.name(e.a)),
            xml_escape(g.name(e.b)),
            e.mark == Mark::Directed
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

fn to_edge_csv(g: &MixedGraph) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["source", "target", "mark"]).expect("in-memory write");
    for e in g.edges() {
        let mark = match e.mark {
            Mark::Directed => "directed",
            Mark::Undirected => "undirected",
        };
        w.write_record([g.name(e.a), g.name(e.b), mark]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("names are utf-8")
}

/// Parses an edge list written by [`serialize`] with [`Format::Edgecsv`].
///
/// With `names`, nodes are indexed by that list (isolated nodes survive and
/// unknown names are an error). Without it, nodes are numbered in order of
/// first appearance.
pub fn parse_edge_csv(text: &str, names: Option<&[String]>) -> Result<MixedGraph> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_err(e, 0))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["source", "target", "mark"] {
        return Err(Error::Parse {
            row: 0,
            col: 1,
            msg: "expected header `source,target,mark`".into(),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e, k + 1))?;
        if rec.len() != 3 {
            return Err(Error::Parse { row: k + 1, col: rec.len().min(3), msg: "expected 3 fields".into() });
        }
        let mark = match rec[2].trim() {
            "directed" => Mark::Directed,
            "undirected" => Mark::Undirected,
            other => {
                return Err(Error::Parse { row: k + 1, col: 3, msg: format!("unknown mark `{other}`") });
            }
        };
        rows.push((rec[0].trim().to_string(), rec[1].trim().to_string(), mark));
    }

    let node_names: Vec<String> = match names {
        Some(ns) => ns.to_vec(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for (a, b, _) in &rows {
                for s in [a, b] {
                    if !seen.contains(s) {
                        seen.push(s.clone());
                    }
                }
            }
            seen
        }
    };
    let mut g = MixedGraph::with_names(node_names)?;
    for (k, (a, b, mark)) in rows.iter().enumerate() {
        let lookup = |s: &str, col| {
            g.index_of(s).ok_or_else(|| Error::Parse { row: k + 1, col, msg: format!("unknown node `{s}`") })
        };
        let (i, j) = (lookup(a, 1)?, lookup(b, 2)?);
        if i == j {
            return Err(Error::Parse { row: k + 1, col: 2, msg: "self-loop".into() });
        }
        if g.adjacent(i, j) {
            return Err(Error::Parse { row: k + 1, col: 2, msg: "duplicate edge".into() });
        }
        match mark {
            Mark::Directed => g.add_directed(i, j),
            Mark::Undirected => g.add_undirected(i, j),
        }
    }
    Ok(g)
}

fn csv_err(e: csv::Error, row: usize) -> Error {
    Error::Parse { row, col: 0, msg: e.to_string() }
}
