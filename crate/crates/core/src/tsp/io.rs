//! Plain-text instance files.
//!
//! ```text
//! id rue-10-3
//! family rue
//! seed 3
//! n 10
//! extent 100
//! optimal_length 290.18541
//! 0 12.5 33.125
//! 1 ...
//! ```
//!
//! `clusters` and `spread` header lines follow `extent` for clustered
//! instances. Reals are written in shortest round-trip form, so a parsed file
//! reproduces the original instance bit for bit. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use super::{ClusterParams, Family, Point, TspInstance};
use crate::error::{Error, Result};

pub(super) fn write_instance(inst: &TspInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "id {}", inst.id);
    let _ = writeln!(out, "family {}", inst.family);
    let _ = writeln!(out, "seed {}", inst.seed);
    let _ = writeln!(out, "n {}", inst.nodes.len());
    let _ = writeln!(out, "extent {}", inst.extent);
    if let Some(c) = inst.clusters {
        let _ = writeln!(out, "clusters {}", c.clusters);
        let _ = writeln!(out, "spread {}", c.spread);
    }
    if let Some(opt) = inst.optimal_length {
        let _ = writeln!(out, "optimal_length {opt}");
    }
    for (i, p) in inst.nodes.iter().enumerate() {
        let _ = writeln!(out, "{i} {} {}", p.x, p.y);
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: Option<&str>) -> Result<T> {
    let value = value.ok_or_else(|| err(line, format!("`{key}` has no value")))?;
    value.parse().map_err(|_| err(line, format!("`{key}` value `{value}` is not a number")))
}

pub(super) fn parse_instance(text: &str) -> Result<TspInstance> {
    let mut id = None;
    let mut family = None;
    let mut seed = None;
    let mut n: Option<usize> = None;
    let mut extent = None;
    let mut clusters = None;
    let mut spread = None;
    let mut optimal = None;
    let mut nodes: Vec<Point> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let value = parts.next();
        match key {
            "id" => id = Some(value.ok_or_else(|| err(line_no, "`id` has no value"))?.to_string()),
            "family" => {
                let v = value.ok_or_else(|| err(line_no, "`family` has no value"))?;
                family = Some(v.parse::<Family>().map_err(|e| err(line_no, e.to_string()))?);
            }
            "seed" => seed = Some(parse_num::<u64>(line_no, key, value)?),
            "n" => n = Some(parse_num::<usize>(line_no, key, value)?),
            "extent" => extent = Some(parse_num::<f64>(line_no, key, value)?),
            "clusters" => clusters = Some(parse_num::<usize>(line_no, key, value)?),
            "spread" => spread = Some(parse_num::<f64>(line_no, key, value)?),
            "optimal_length" => optimal = Some(parse_num::<f64>(line_no, key, value)?),
            _ => {
                let index: usize = key.parse().map_err(|_| err(line_no, format!("unknown header `{key}`")))?;
                if index != nodes.len() {
                    return Err(err(line_no, format!("expected node {}, found node {index}", nodes.len())));
                }
                let x = parse_num::<f64>(line_no, "x", value)?;
                let y = parse_num::<f64>(line_no, "y", parts.next())?;
                if parts.next().is_some() {
                    return Err(err(line_no, "node line has trailing fields"));
                }
                nodes.push(Point::new(x, y));
            }
        }
        if key.parse::<usize>().is_err() && parts.next().is_some() {
            return Err(err(line_no, format!("`{key}` header has trailing fields")));
        }
    }

    let id = id.ok_or_else(|| err(0, "missing `id` header"))?;
    let family = family.ok_or_else(|| err(0, "missing `family` header"))?;
    let seed = seed.ok_or_else(|| err(0, "missing `seed` header"))?;
    let n = n.ok_or_else(|| err(0, "missing `n` header"))?;
    if nodes.len() != n {
        return Err(err(0, format!("header says n = {n} but {} node lines found", nodes.len())));
    }
    let cluster_params = match (clusters, spread) {
        (Some(clusters), Some(spread)) => Some(ClusterParams { clusters, spread }),
        (None, None) => None,
        _ => return Err(err(0, "`clusters` and `spread` must appear together")),
    };

    let mut inst = TspInstance::new(id, family, seed, nodes)?;
    if let Some(extent) = extent {
        inst = inst.with_generation(extent, cluster_params);
    }
    if let Some(opt) = optimal {
        inst.set_optimal_length(opt)?;
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_clu, generate_rue};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_mismatched_node_count() {
        let text = "id a\nfamily rue\nseed 1\nn 4\n0 0 0\n1 1 0\n2 1 1\n";
        assert!(matches!(parse_instance(text), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_out_of_order_nodes() {
        let text = "id a\nfamily rue\nseed 1\nn 3\n0 0 0\n2 1 0\n1 1 1\n";
        assert!(matches!(parse_instance(text), Err(Error::Format { line: 6, .. })));
    }

    #[test]
    fn clustered_header_round_trips() {
        let params = ClusterParams { clusters: 3, spread: 4.25 };
        let mut inst = generate_clu(12, params, 9, 100.0).unwrap();
        inst.set_optimal_length(123.456789).unwrap();
        let parsed = parse_instance(&inst.to_text()).unwrap();
        assert_eq!(parsed, inst);
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(n in 3usize..30, seed in any::<u64>(), extent in 1e-3f64..1e6) {
            let inst = generate_rue(n, seed, extent).unwrap();
            let text = inst.to_text();
            let parsed = parse_instance(&text).unwrap();
            prop_assert_eq!(parsed.to_text(), text);
            for (a, b) in parsed.nodes().iter().zip(inst.nodes()) {
                prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
                prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
            }
        }
    }
}
