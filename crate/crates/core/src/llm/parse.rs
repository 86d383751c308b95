//! Answer grammar for model replies.
//!
//! One record per line:
//!
//! ```text
//! PAIR <id> <id> CROSSOVER=<name> MUTATION=<name>[ CHILD=<i>,<j>,...]
//! ```
//!
//! A line is a record when, after leading whitespace and list or quote
//! markers (`-`, `*`, `>`, backticks), it starts with `PAIR ` followed by a
//! digit. Every other line is ignored, so prose around the records is
//! harmless. Inside a record the grammar is strict. Operator names are
//! matched case-insensitively.

use thiserror::Error;

use super::ExecutionMode;
use crate::operators::{Crossover, Mutation};
use crate::selection::PlannedPair;
use crate::tsp::validate_tour;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("reply contains no PAIR records")]
    Empty,
    #[error("record {pair} is malformed: {reason}")]
    Malformed { pair: usize, reason: String },
    #[error("record {pair} has no CHILD route")]
    MissingChild { pair: usize },
    #[error("record {pair} has a CHILD that is not a permutation of the cities")]
    InvalidChild { pair: usize },
    #[error("record {pair} names individual {id}, which is not in the pool")]
    UnknownIndividual { pair: usize, id: usize },
    #[error("unknown operator `{name}`")]
    UnknownOperator { name: String },
}

fn record_body(line: &str) -> Option<&str> {
    let body = line.trim().trim_start_matches(['-', '*', '>', '`', ' ', '\t']).trim_end_matches(['`', ' ', '\t']);
    let rest = body.strip_prefix("PAIR ")?;
    rest.trim_start().starts_with(|c: char| c.is_ascii_digit()).then_some(body)
}

fn field<'a>(token: Option<&'a str>, key: &str, pair: usize) -> Result<&'a str, ParseError> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| ParseError::Malformed { pair, reason: format!("expected {key}=<name>") })
}

fn parse_id(token: Option<&str>, pair: usize) -> Result<usize, ParseError> {
    let token = token.ok_or_else(|| ParseError::Malformed { pair, reason: "expected two ids".into() })?;
    token.parse().map_err(|_| ParseError::Malformed { pair, reason: format!("`{token}` is not an id") })
}

fn parse_child(list: &str, pair: usize) -> Result<Vec<usize>, ParseError> {
    let list = list.trim();
    let list = list.strip_prefix('[').and_then(|l| l.strip_suffix(']')).unwrap_or(list);
    list.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse()
                .map_err(|_| ParseError::Malformed { pair, reason: format!("child entry `{tok}` is not a city index") })
        })
        .collect()
}

/// Extracts pairs from a reply.
///
/// `pool_len` is the number of members listed in the prompt; the offspring
/// of record `k` may be referenced by later records as `pool_len + k`.
/// Children are validated against `node_count` in [`ExecutionMode::LlmExecutes`]
/// and dropped in [`ExecutionMode::EngineExecutes`].
pub fn parse_response(
    text: &str,
    mode: ExecutionMode,
    pool_len: usize,
    node_count: usize,
) -> Result<Vec<PlannedPair>, ParseError> {
    let mut pairs = Vec::new();
    for line in text.lines() {
        let Some(body) = record_body(line) else { continue };
        let k = pairs.len();
        let (head, child_text) = match body.split_once(" CHILD=") {
            Some((head, child)) => (head, Some(child)),
            None => (body, None),
        };
        let mut tokens = head.split_whitespace();
        tokens.next(); // PAIR
        let first = parse_id(tokens.next(), k)?;
        let second = parse_id(tokens.next(), k)?;
        let crossover_name = field(tokens.next(), "CROSSOVER", k)?;
        let mutation_name = field(tokens.next(), "MUTATION", k)?;
        if let Some(extra) = tokens.next() {
            return Err(ParseError::Malformed { pair: k, reason: format!("unexpected field `{extra}`") });
        }
        let crossover: Crossover =
            crossover_name.parse().map_err(|_| ParseError::UnknownOperator { name: crossover_name.to_string() })?;
        let mutation: Mutation =
            mutation_name.parse().map_err(|_| ParseError::UnknownOperator { name: mutation_name.to_string() })?;
        for id in [first, second] {
            if id >= pool_len + k {
                return Err(ParseError::UnknownIndividual { pair: k, id });
            }
        }
        let child = match (mode, child_text) {
            (ExecutionMode::EngineExecutes, Some(c)) => {
                parse_child(c, k)?;
                None
            }
            (ExecutionMode::EngineExecutes, None) => None,
            (ExecutionMode::LlmExecutes, None) => return Err(ParseError::MissingChild { pair: k }),
            (ExecutionMode::LlmExecutes, Some(c)) => {
                let child = parse_child(c, k)?;
                validate_tour(node_count, &child).map_err(|_| ParseError::InvalidChild { pair: k })?;
                Some(child)
            }
        };
        pairs.push(PlannedPair { first, second, crossover, mutation, child });
    }
    if pairs.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(pairs)
}

/// Writes one record in canonical form.
pub fn format_record(pair: &PlannedPair) -> String {
    let mut line =
        format!("PAIR {} {} CROSSOVER={} MUTATION={}", pair.first, pair.second, pair.crossover, pair.mutation);
    if let Some(child) = &pair.child {
        let route: Vec<String> = child.iter().map(usize::to_string).collect();
        line.push_str(" CHILD=");
        line.push_str(&route.join(","));
    }
    line
}

pub fn format_records(pairs: &[PlannedPair]) -> String {
    pairs.iter().map(|p| format_record(p) + "\n").collect()
}
