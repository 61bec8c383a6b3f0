//! Structural checks and deterministic ordering.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BlockKind, FlowError, FlowGraph, PortType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Diagnostic {
    MissingInput,
    MultipleInputs {
        ids: Vec<String>,
    },
    MissingRegistration,
    MultipleRegistrations {
        ids: Vec<String>,
    },
    /// The registration block's image must come straight from the input block.
    RegistrationNotFedByInput {
        id: String,
    },
    MissingOutput,
    /// No output block has any incoming connection.
    NoResultPath,
    Cycle {
        ids: Vec<String>,
    },
    Unreachable {
        id: String,
    },
    UnconnectedPort {
        block: String,
        port: String,
    },
    TypeMismatch {
        from: String,
        to: String,
        found: PortType,
        expected: Vec<PortType>,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MissingInput => write!(f, "graph has no input block"),
            Diagnostic::MultipleInputs { ids } => write!(f, "graph has several input blocks: {}", ids.join(", ")),
            Diagnostic::MissingRegistration => write!(f, "graph has no registration block"),
            Diagnostic::MultipleRegistrations { ids } => {
                write!(f, "graph has several registration blocks: {}", ids.join(", "))
            }
            Diagnostic::RegistrationNotFedByInput { id } => {
                write!(f, "registration block {id} must take its image from the input block")
            }
            Diagnostic::MissingOutput => write!(f, "graph has no output block"),
            Diagnostic::NoResultPath => write!(f, "nothing is connected to an output block"),
            Diagnostic::Cycle { ids } => write!(f, "cycle through {}", ids.join(", ")),
            Diagnostic::Unreachable { id } => write!(f, "block {id} is not reachable from the input block"),
            Diagnostic::UnconnectedPort { block, port } => write!(f, "input {block}.{port} is not connected"),
            Diagnostic::TypeMismatch { from, to, found, expected } => {
                let exp: Vec<String> = expected.iter().map(|t| t.to_string()).collect();
                write!(f, "{from} -> {to}: got {found}, expected {}", exp.join(" or "))
            }
        }
    }
}

/// All structural problems of `g`; empty means executable.
pub fn validate(g: &FlowGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let of_kind = |k: BlockKind| -> Vec<String> {
        let mut v: Vec<String> = g.blocks.iter().filter(|b| b.kind() == k).map(|b| b.id.clone()).collect();
        v.sort();
        v
    };

    let inputs = of_kind(BlockKind::Input);
    match inputs.len() {
        0 => out.push(Diagnostic::MissingInput),
        1 => {}
        _ => out.push(Diagnostic::MultipleInputs { ids: inputs.clone() }),
    }
    let regs = of_kind(BlockKind::Registration);
    match regs.len() {
        0 => out.push(Diagnostic::MissingRegistration),
        1 => {
            let fed_by_input = g
                .source_of(&regs[0], "image")
                .and_then(|src| g.block(&src.block))
                .is_some_and(|b| b.kind() == BlockKind::Input);
            if !fed_by_input {
                out.push(Diagnostic::RegistrationNotFedByInput { id: regs[0].clone() });
            }
        }
        _ => out.push(Diagnostic::MultipleRegistrations { ids: regs }),
    }
    let outputs = of_kind(BlockKind::Output);
    if outputs.is_empty() {
        out.push(Diagnostic::MissingOutput);
    } else if !g.connections.iter().any(|c| outputs.contains(&c.to.block)) {
        out.push(Diagnostic::NoResultPath);
    }

    let ids: Vec<String> = g.blocks.iter().map(|b| b.id.clone()).collect();
    let edges: Vec<(String, String)> =
        g.connections.iter().map(|c| (c.from.block.clone(), c.to.block.clone())).collect();
    for cycle in cycles(&ids, &edges) {
        out.push(Diagnostic::Cycle { ids: cycle });
    }

    if inputs.len() == 1 {
        let mut seen = BTreeSet::from([inputs[0].as_str()]);
        let mut queue = VecDeque::from([inputs[0].as_str()]);
        while let Some(n) = queue.pop_front() {
            for (a, b) in &edges {
                if a == n && seen.insert(b.as_str()) {
                    queue.push_back(b);
                }
            }
        }
        for b in &g.blocks {
            if !seen.contains(b.id.as_str()) {
                out.push(Diagnostic::Unreachable { id: b.id.clone() });
            }
        }
    }

    for b in &g.blocks {
        for p in b.kind().inputs() {
            if g.source_of(&b.id, p.name).is_none() {
                out.push(Diagnostic::UnconnectedPort { block: b.id.clone(), port: p.name.into() });
            }
        }
    }

    for c in &g.connections {
        let (Some(from), Some(to)) = (g.block(&c.from.block), g.block(&c.to.block)) else { continue };
        let (Some(out_port), Some(accepted)) =
            (from.kind().output_port(&c.from.port), to.kind().input_port(&c.to.port))
        else {
            continue;
        };
        if !accepted.contains(&out_port.ty) {
            out.push(Diagnostic::TypeMismatch {
                from: format!("{}.{}", c.from.block, c.from.port),
                to: format!("{}.{}", c.to.block, c.to.port),
                found: out_port.ty,
                expected: accepted.to_vec(),
            });
        }
    }
    out
}

/// Kahn's algorithm; among ready nodes the lexicographically smallest id
/// goes first. Edges naming unknown ids are ignored.
pub fn topo_sort(ids: &[String], edges: &[(String, String)]) -> Result<Vec<String>, FlowError> {
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|i| (i.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut unique = BTreeSet::new();
    for (a, b) in edges {
        if !indegree.contains_key(a.as_str()) || !indegree.contains_key(b.as_str()) || !unique.insert((a, b)) {
            continue;
        }
        succ.entry(a).or_default().push(b);
        *indegree.get_mut(b.as_str()).expect("checked") += 1;
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(n) = ready.pop_first() {
        order.push(n.to_string());
        for m in succ.get(n).map(Vec::as_slice).unwrap_or_default() {
            let d = indegree.get_mut(m).expect("known");
            *d -= 1;
            if *d == 0 {
                ready.insert(m);
            }
        }
    }
    if order.len() < indegree.len() {
        let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        let rest = indegree.keys().filter(|k| !done.contains(*k)).map(|k| k.to_string()).collect();
        return Err(FlowError::CyclicGraph(rest));
    }
    Ok(order)
}

/// Strongly connected groups of blocks that lie on a cycle, each sorted,
/// ordered by first id.
fn cycles(ids: &[String], edges: &[(String, String)]) -> Vec<Vec<String>> {
    let Err(FlowError::CyclicGraph(left)) = topo_sort(ids, edges) else { return Vec::new() };
    // Kahn leaves cycle members plus anything downstream of them; peel off
    // nodes with no successor among the leftovers.
    let mut rest: BTreeSet<String> = left.into_iter().collect();
    loop {
        let sinks: Vec<String> =
            rest.iter().filter(|n| !edges.iter().any(|(a, b)| a == *n && rest.contains(b))).cloned().collect();
        if sinks.is_empty() {
            break;
        }
        sinks.iter().for_each(|s| {
            rest.remove(s);
        });
    }
    let reach = |from: &str| -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from.to_string()]);
        while let Some(n) = queue.pop_front() {
            for (a, b) in edges {
                if *a == n && rest.contains(b) && seen.insert(b.clone()) {
                    queue.push_back(b.clone());
                }
            }
        }
        seen
    };
    let reachable: BTreeMap<String, BTreeSet<String>> = rest.iter().map(|n| (n.clone(), reach(n))).collect();
    let mut assigned = BTreeSet::new();
    let mut out = Vec::new();
    for n in &rest {
        if assigned.contains(n) || !reachable[n].contains(n) {
            continue;
        }
        let group: Vec<String> =
            rest.iter().filter(|m| reachable[n].contains(*m) && reachable[*m].contains(n)).cloned().collect();
        assigned.extend(group.iter().cloned());
        out.push(group);
    }
    out
}
