//! Posterior trace files.
//!
//! * `trace.csv`: header `iteration,z_1,...,z_n`, then one row per retained
//!   iteration with 1-based cluster labels.
//! * `atoms.csv`: header `iteration,cluster,size,alpha,mode`, one row per
//!   cluster and retained iteration; `mode` is the hex edge bitstring of
//!   [`Graph::to_hex`] and `alpha` is printed in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::cer::{CerAtom, Hyperparams};
use crate::error::{Error, Result};
use crate::gibbs::{ClusterState, PosteriorTrace, Snapshot};
use crate::graph::Graph;
use crate::io::{read_string, write_string};

pub fn trace_csv(trace: &PosteriorTrace) -> String {
    let mut out = String::from("iteration");
    for i in 1..=trace.n_obs() {
        write!(out, ",z_{i}").unwrap();
    }
    out.push('\n');
    for s in &trace.snapshots {
        write!(out, "{}", s.iteration).unwrap();
        for &z in s.state.assignments() {
            write!(out, ",{}", z + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn atoms_csv(trace: &PosteriorTrace) -> String {
    let mut out = String::from("iteration,cluster,size,alpha,mode\n");
    for s in &trace.snapshots {
        for (k, (atom, size)) in s.state.atoms().iter().zip(s.state.sizes()).enumerate() {
            writeln!(out, "{},{},{},{},{}", s.iteration, k + 1, size, atom.alpha(), atom.mode().to_hex()).unwrap();
        }
    }
    out
}

pub fn write_trace(trace: &PosteriorTrace, trace_path: &Path, atoms_path: &Path) -> Result<()> {
    write_string(trace_path, &trace_csv(trace))?;
    write_string(atoms_path, &atoms_csv(trace))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("bad {what}")))
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(trace_path: &Path, atoms_path: &Path, hyperparams: Hyperparams, seed: u64) -> Result<PosteriorTrace> {
    let n_nodes = hyperparams.n_nodes();
    let text = read_string(atoms_path)?;
    let mut atoms: BTreeMap<usize, Vec<(usize, CerAtom)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split(',');
        let ln = lineno + 1;
        let it: usize = field(atoms_path, ln, toks.next(), "iteration")?;
        let k: usize = field(atoms_path, ln, toks.next(), "cluster")?;
        let _size: usize = field(atoms_path, ln, toks.next(), "size")?;
        let alpha: f64 = field(atoms_path, ln, toks.next(), "alpha")?;
        let hex = toks.next().ok_or_else(|| Error::parse(atoms_path, ln, "missing mode"))?;
        let mode = Graph::from_hex(n_nodes, hex.trim()).map_err(|e| Error::parse(atoms_path, ln, e.to_string()))?;
        let atom = CerAtom::new(mode, alpha).map_err(|e| Error::parse(atoms_path, ln, e.to_string()))?;
        atoms.entry(it).or_default().push((k, atom));
    }

    let text = read_string(trace_path)?;
    let mut snapshots = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let ln = lineno + 1;
        let mut toks = line.split(',');
        let iteration: usize = field(trace_path, ln, toks.next(), "iteration")?;
        let z = toks
            .map(|t| match t.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::parse(trace_path, ln, format!("bad label {t:?}"))),
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut these = atoms
            .remove(&iteration)
            .ok_or_else(|| Error::parse(atoms_path, 0, format!("no atoms for iteration {iteration}")))?;
        these.sort_by_key(|(k, _)| *k);
        if these.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
            return Err(Error::parse(atoms_path, 0, format!("cluster ids of iteration {iteration} are not 1..K")));
        }
        let state = ClusterState::new(z, these.into_iter().map(|(_, a)| a).collect())
            .map_err(|e| Error::parse(trace_path, ln, e.to_string()))?;
        snapshots.push(Snapshot { iteration, state });
    }
    if snapshots.is_empty() {
        return Err(Error::Empty("posterior trace"));
    }
    Ok(PosteriorTrace {
        seed,
        n_nodes,
        hyperparams,
        snapshots,
    })
}
