//! SDPA sparse format (.dat-s) export and import for external cross-checks.
//!
//! Layout: line 1 the number of constraints `m`, line 2 the number of
//! blocks, line 3 the block sizes (free scalars become one final diagonal
//! block of paired nonnegative variables, written with a negative size),
//! line 4 the objective m-vector, then entry lines `k b i j v` with
//! `i <= j` and `k = 0` denoting the constant (objective) matrix. Output is
//! deterministic: entries sorted by `(k, b, i, j)`. Values are printed in
//! shortest round-trip form, so re-parsing reproduces the exact bits.

use super::{SdpProblem, VarId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("sdpa parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Serializes the problem to SDPA sparse format.
///
/// Convention: constraint k is `<A_k, X> = b_k`; the objective (maximized
/// in [`SdpProblem`]) supplies the k = 0 entries; the b-vector is line 4.
pub fn export_sdpa(problem: &SdpProblem) -> String {
    let nb = problem.block_sizes.len();
    let nf = problem.num_free;
    let has_free_block = nf > 0;
    let total_blocks = nb + usize::from(has_free_block);

    let mut out = String::new();
    out.push_str(&format!("{}\n", problem.constraints.len()));
    out.push_str(&format!("{total_blocks}\n"));
    let mut sizes: Vec<String> = problem.block_sizes.iter().map(|s| s.to_string()).collect();
    if has_free_block {
        sizes.push(format!("-{}", 2 * nf));
    }
    out.push_str(&sizes.join(" "));
    out.push('\n');
    let rhs: Vec<String> = problem
        .constraints
        .iter()
        .map(|c| format_f64(c.rhs))
        .collect();
    out.push_str(&rhs.join(" "));
    out.push('\n');

    // Collect entries as (k, block, i, j, v) with 1-based indices.
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let free_block = nb + 1;
    let push_var = |entries: &mut Vec<(usize, usize, usize, usize, f64)>,
                        k: usize,
                        v: VarId,
                        coeff: f64| match v {
        VarId::Entry { block, row, col } => {
            entries.push((k, block as usize + 1, row as usize + 1, col as usize + 1, coeff));
        }
        VarId::Free(i) => {
            let u = 2 * i as usize + 1;
            entries.push((k, free_block, u, u, coeff));
            entries.push((k, free_block, u + 1, u + 1, -coeff));
        }
    };
    for (v, c) in &problem.objective {
        push_var(&mut entries, 0, *v, *c);
    }
    for (k, con) in problem.constraints.iter().enumerate() {
        for (v, c) in &con.terms {
            push_var(&mut entries, k + 1, *v, *c);
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (k, b, i, j, v) in entries {
        out.push_str(&format!("{k} {b} {i} {j} {}\n", format_f64(v)));
    }
    out
}

/// Parses SDPA sparse format written by [`export_sdpa`] back into a
/// problem. The final diagonal block, when present with paired entries of
/// opposite sign, is decoded back into free scalars.
pub fn parse_sdpa(text: &str) -> Result<SdpProblem, SdpaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or(SdpaError::Parse { line: 0, msg: format!("missing {what}") })
    };

    let (ln, l) = next("constraint count")?;
    let m: usize = parse_num(l, ln)?;
    let (ln, l) = next("block count")?;
    let nblocks: usize = parse_num(l, ln)?;
    let (ln, l) = next("block sizes")?;
    let sizes: Vec<i64> = l
        .split_whitespace()
        .map(|t| parse_num::<i64>(t, ln))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nblocks {
        return Err(SdpaError::Parse {
            line: ln,
            msg: format!("expected {nblocks} block sizes, found {}", sizes.len()),
        });
    }
    let (ln, l) = next("objective vector")?;
    let rhs: Vec<f64> = l
        .split_whitespace()
        .map(|t| parse_num::<f64>(t, ln))
        .collect::<Result<_, _>>()?;
    if rhs.len() != m {
        return Err(SdpaError::Parse {
            line: ln,
            msg: format!("expected {m} objective entries, found {}", rhs.len()),
        });
    }

    // Negative final size: paired free variables.
    let has_free_block = matches!(sizes.last(), Some(&s) if s < 0);
    let psd_sizes: &[i64] = if has_free_block {
        &sizes[..sizes.len() - 1]
    } else {
        &sizes
    };
    let mut problem = SdpProblem::new();
    for &s in psd_sizes {
        if s <= 0 {
            return Err(SdpaError::Parse {
                line: ln,
                msg: "non-final diagonal blocks are not supported".into(),
            });
        }
        problem.declare_block(s as usize);
    }
    let nf = if has_free_block {
        let s = -sizes[sizes.len() - 1];
        if s % 2 != 0 {
            return Err(SdpaError::Parse {
                line: ln,
                msg: "free-variable block must have even size".into(),
            });
        }
        (s / 2) as usize
    } else {
        0
    };
    for _ in 0..nf {
        problem.declare_free();
    }
    let free_block = psd_sizes.len() + 1;

    let mut objective: Vec<(VarId, f64)> = Vec::new();
    let mut rows: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); m];
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(SdpaError::Parse {
                line: ln,
                msg: format!("expected 5 fields, found {}", toks.len()),
            });
        }
        let k: usize = parse_num(toks[0], ln)?;
        let b: usize = parse_num(toks[1], ln)?;
        let i: usize = parse_num(toks[2], ln)?;
        let j: usize = parse_num(toks[3], ln)?;
        let v: f64 = parse_num(toks[4], ln)?;
        if k > m || b == 0 || b > nblocks {
            return Err(SdpaError::Parse {
                line: ln,
                msg: format!("entry index out of range: k={k} b={b}"),
            });
        }
        let var = if has_free_block && b == free_block {
            if i != j {
                return Err(SdpaError::Parse {
                    line: ln,
                    msg: "off-diagonal entry in diagonal block".into(),
                });
            }
            // Paired encoding: odd index carries +coeff, even carries
            // -coeff; only record the odd one.
            if i % 2 == 0 {
                continue;
            }
            VarId::Free(((i - 1) / 2) as u32)
        } else {
            VarId::Entry {
                block: (b - 1) as u32,
                row: (i - 1) as u16,
                col: (j - 1) as u16,
            }
        };
        if k == 0 {
            objective.push((var, v));
        } else {
            rows[k - 1].push((var, v));
        }
    }
    for (row, r) in rows.into_iter().zip(rhs) {
        problem
            .add_equality(row, r)
            .map_err(|e| SdpaError::Parse { line: 0, msg: e.to_string() })?;
    }
    problem.set_objective_max(objective);
    Ok(problem)
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, SdpaError> {
    tok.parse().map_err(|_| SdpaError::Parse {
        line,
        msg: format!("cannot parse {tok:?}"),
    })
}

/// Shortest representation that round-trips the exact f64 bits.
fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{SdpProblem, VarId};

    fn sample_problem() -> SdpProblem {
        let mut p = SdpProblem::new();
        let b1 = p.declare_block(2);
        let b2 = p.declare_block(1);
        let y = p.declare_free();
        p.add_equality([(VarId::entry(b1, 0, 0), 1.0), (y, 0.25)], 2.0)
            .unwrap();
        p.add_equality(
            [(VarId::entry(b1, 0, 1), -1.5), (VarId::entry(b2, 0, 0), 3.0)],
            -0.125,
        )
        .unwrap();
        p.set_objective_max([(y, 1.0), (VarId::entry(b1, 1, 1), 0.5)]);
        p
    }

    #[test]
    fn five_line_minimal_file() {
        let mut p = SdpProblem::new();
        let b = p.declare_block(1);
        p.add_equality([(VarId::entry(b, 0, 0), 1.0)], 2.0).unwrap();
        let text = export_sdpa(&p);
        assert_eq!(text.trim_end().lines().count(), 5);
    }

    #[test]
    fn roundtrip_reproduces_problem_data() {
        let p = sample_problem();
        let text = export_sdpa(&p);
        let q = parse_sdpa(&text).unwrap();
        assert_eq!(p.block_sizes, q.block_sizes);
        assert_eq!(p.num_free, q.num_free);
        assert_eq!(p.constraints.len(), q.constraints.len());
        for (cp, cq) in p.constraints.iter().zip(&q.constraints) {
            assert_eq!(cp.rhs.to_bits(), cq.rhs.to_bits());
            assert_eq!(cp.terms, cq.terms);
        }
        assert_eq!(p.objective, q.objective);
    }

    #[test]
    fn double_export_is_bit_identical() {
        let p = sample_problem();
        let t1 = export_sdpa(&p);
        let t2 = export_sdpa(&parse_sdpa(&t1).unwrap());
        assert_eq!(t1, t2);
    }
}
