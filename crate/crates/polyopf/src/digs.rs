//! Dynamic inequality generation: a fixed-degree master relaxation, a
//! dual-guided cut-generation subproblem, and the alternating loop.
//!
//! The master is the level-1 moment relaxation of the degree-2 program
//! augmented with the pool's cuts as plain scalar inequalities. The
//! subproblem searches the degree-4 certificate cone restricted to degree-2
//! polynomials for a `p` minimizing `⟨p, Y⟩` against the master's optimal
//! moment vector `Y`; a negative optimum is a valid inequality violated by
//! `Y`, and adding it tightens the next master.

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::network::{OpfMatrices, PowerNetwork};
use crate::polyprog::{Monomial, PolyProgram, Polynomial};
use crate::relax::dense::{build_lasserre, MomentBasis, MomentRelaxation, RelaxError};
use crate::relax::sparse::extract_solution;
use crate::report::{BoundReport, Status};
use crate::sdp::{solve, BlockKind, Constraint, Entry, SdpOptions, SdpProblem, SdpStatus, Sense};

#[derive(Debug, Error)]
pub enum DigsError {
    #[error("master relaxation failed: {0}")]
    Master(String),
    #[error("subproblem failed: {0}")]
    Subproblem(String),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

#[derive(Debug, Clone)]
pub struct Cut {
    pub poly: Polynomial,
    /// Loop iteration that produced the cut (0-based).
    pub iteration: usize,
    /// Subproblem objective ⟨p, Y⟩ at generation time (negative).
    pub subproblem_objective: f64,
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iteration: usize,
    pub bound: f64,
    pub subproblem_objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CutPool {
    pub cuts: Vec<Cut>,
    pub history: Vec<IterRecord>,
}

impl CutPool {
    /// Iteration history as CSV (iteration, bound, subproblem_objective,
    /// seconds).
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,bound,subproblem_objective,seconds\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{:.6},{:.6e},{:.3}\n",
                r.iteration, r.bound, r.subproblem_objective, r.seconds
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DigsOptions {
    pub max_iter: usize,
    /// Relative termination threshold: stop when the subproblem objective is
    /// ≥ −eps_rel·(1 + |bound|).
    pub eps_rel: f64,
    pub time_budget: f64,
}

impl Default for DigsOptions {
    fn default() -> Self {
        DigsOptions {
            max_iter: 30,
            eps_rel: 1e-5,
            time_budget: 600.0,
        }
    }
}

fn master_program(pp: &PolyProgram, pool: &CutPool) -> PolyProgram {
    let mut mp = pp.clone();
    mp.inequalities.extend(pool.cuts.iter().map(|c| c.poly.clone()));
    mp
}

/// Solves the cut-augmented level-1 master; returns the bound, the moment
/// vector over all monomials of degree ≤ 2, and the solved relaxation for
/// extraction.
pub fn solve_master(
    pp: &PolyProgram,
    pool: &CutPool,
) -> Result<(f64, HashMap<Monomial, f64>, MomentRelaxation, crate::sdp::SdpSolution), DigsError> {
    assert!(pp.degree() <= 2, "master requires a degree-2 program");
    let mp = master_program(pp, pool);
    let rel = build_lasserre(&mp, 1)?;
    let sol = rel.solve(&SdpOptions::default()).map_err(|e| DigsError::Master(e.to_string()))?;
    if sol.status != SdpStatus::Optimal {
        return Err(DigsError::Master(format!("solver status {:?}", sol.status)));
    }
    let y = rel.moments(&sol.block_values);
    Ok((sol.primal_obj, y, rel, sol))
}

/// Certificate-cone membership subproblem: minimize ⟨p, Y⟩ over degree-2
/// polynomials p admitting a degree-4 certificate
/// `p = σ₀ + Σ_i g_i σ_i + Σ_j h_j q_j` over the program's constraints and
/// the current cuts, normalized by Σ tr(Gram blocks) = 1.
pub fn solve_subproblem(
    dual_y: &HashMap<Monomial, f64>,
    pp: &PolyProgram,
    pool: &CutPool,
) -> Result<(Polynomial, f64), DigsError> {
    let nv = pp.num_vars();
    let vars: Vec<usize> = (0..nv).collect();
    let b2 = MomentBasis::new(&vars, 2);
    let b1 = MomentBasis::new(&vars, 1);

    let mut sdp = SdpProblem::new(Vec::new());
    let g0 = sdp.add_block(b2.len(), BlockKind::Psd);
    let ineqs: Vec<&Polynomial> = pp
        .inequalities
        .iter()
        .chain(pool.cuts.iter().map(|c| &c.poly))
        .collect();
    let gram_i: Vec<usize> = ineqs.iter().map(|_| sdp.add_block(b1.len(), BlockKind::Psd)).collect();
    let q_j: Vec<usize> = pp
        .equalities
        .iter()
        .map(|_| sdp.add_block(b2.len(), BlockKind::FreeDiag))
        .collect();

    // Certificate coefficient of each monomial γ (deg ≤ 4) as a linear form
    // over block entries.
    let mut contrib: HashMap<Monomial, Vec<Entry>> = HashMap::new();
    let push = |m: Monomial, e: Entry, contrib: &mut HashMap<Monomial, Vec<Entry>>| {
        contrib.entry(m).or_default().push(e);
    };
    for a in 0..b2.len() {
        for b in a..b2.len() {
            let prod = b2.monomials[a].mul(&b2.monomials[b]);
            push(prod, Entry::new(g0, a, b, 1.0), &mut contrib);
        }
    }
    for (gi, g) in ineqs.iter().enumerate() {
        for a in 0..b1.len() {
            for b in a..b1.len() {
                let prod = b1.monomials[a].mul(&b1.monomials[b]);
                for (mg, cg) in g.terms() {
                    push(prod.mul(mg), Entry::new(gram_i[gi], a, b, cg), &mut contrib);
                }
            }
        }
    }
    for (hj, h) in pp.equalities.iter().enumerate() {
        for (d, delta) in b2.monomials.iter().enumerate() {
            for (mh, ch) in h.terms() {
                push(delta.mul(mh), Entry::new(q_j[hj], d, d, ch), &mut contrib);
            }
        }
    }

    // Degree ≤ 2 coefficients form p and enter the objective weighted by Y;
    // higher degrees must cancel exactly.
    let mut p_coeff_entries: Vec<(Monomial, Vec<Entry>)> = Vec::new();
    for (m, entries) in contrib {
        if m.degree() <= 2 {
            let yv = *dual_y
                .get(&m)
                .ok_or_else(|| DigsError::Subproblem(format!("missing moment for {m:?}")))?;
            for e in &entries {
                sdp.objective.push(Entry::new(e.block, e.row, e.col, e.coeff * yv));
            }
            p_coeff_entries.push((m, entries));
        } else {
            sdp.add_constraint(Constraint::new(entries, 0.0, Sense::Eq, "coeff match"));
        }
    }
    sdp.objective = crate::sdp::problem::merge_entries(std::mem::take(&mut sdp.objective));

    // Normalization: total trace of all Gram blocks equals one.
    let mut tr_entries = Vec::new();
    for i in 0..b2.len() {
        tr_entries.push(Entry::new(g0, i, i, 1.0));
    }
    for &gb in &gram_i {
        for i in 0..b1.len() {
            tr_entries.push(Entry::new(gb, i, i, 1.0));
        }
    }
    sdp.add_constraint(Constraint::new(tr_entries, 1.0, Sense::Eq, "gram trace = 1"));

    let sol = solve(&sdp, &SdpOptions::default()).map_err(|e| DigsError::Subproblem(e.to_string()))?;
    if sol.status != SdpStatus::Optimal {
        return Err(DigsError::Subproblem(format!("solver status {:?}", sol.status)));
    }
    // Read p back out of the certificate blocks.
    let mut p = Polynomial::zero();
    for (m, entries) in p_coeff_entries {
        let mut v = 0.0;
        for e in &entries {
            let x = sol.block_values[e.block][(e.row, e.col)];
            v += e.coeff * x * if e.row == e.col { 1.0 } else { 2.0 };
        }
        p.add_term(m, v);
    }
    Ok((p, sol.primal_obj))
}

/// Normalized coefficient distance used by the duplicate-cut guard.
fn cut_distance(a: &Polynomial, b: &Polynomial) -> f64 {
    let norm = |p: &Polynomial| p.terms().map(|(_, c)| c * c).sum::<f64>().sqrt().max(1e-300);
    let (na, nb) = (norm(a), norm(b));
    let mut keys: Vec<&Monomial> = a.terms().map(|(m, _)| m).collect();
    keys.extend(b.terms().map(|(m, _)| m));
    keys.sort();
    keys.dedup();
    keys.iter()
        .map(|m| {
            let d = a.coefficient(m) / na - b.coefficient(m) / nb;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// The DIGS loop on a degree-2 program. Alternates master and subproblem
/// until the subproblem objective is within eps of zero, the iteration cap,
/// or the time budget; certifies the final master via rank-1 extraction.
pub fn digs_loop(
    pp: &PolyProgram,
    net: &PowerNetwork,
    mats: &OpfMatrices,
    opts: &DigsOptions,
) -> (BoundReport, CutPool) {
    let start = Instant::now();
    let mut pool = CutPool::default();
    let mut failed = false;
    let mut duplicate = false;
    let mut last: Option<(MomentRelaxation, crate::sdp::SdpSolution)> = None;
    for iteration in 0..opts.max_iter.max(1) {
        let (bound, y, rel, sol) = match solve_master(pp, &pool) {
            Ok(v) => v,
            Err(_) => {
                failed = true;
                break;
            }
        };
        last = Some((rel, sol));
        let eps = opts.eps_rel * (1.0 + bound.abs());
        if start.elapsed().as_secs_f64() > opts.time_budget || iteration + 1 >= opts.max_iter {
            pool.history.push(IterRecord {
                iteration,
                bound,
                subproblem_objective: f64::NAN,
                seconds: start.elapsed().as_secs_f64(),
            });
            break;
        }
        let (p, sub_obj) = match solve_subproblem(&y, pp, &pool) {
            Ok(v) => v,
            Err(_) => {
                pool.history.push(IterRecord {
                    iteration,
                    bound,
                    subproblem_objective: f64::NAN,
                    seconds: start.elapsed().as_secs_f64(),
                });
                failed = true;
                break;
            }
        };
        pool.history.push(IterRecord {
            iteration,
            bound,
            subproblem_objective: sub_obj,
            seconds: start.elapsed().as_secs_f64(),
        });
        if sub_obj >= -eps {
            break;
        }
        if pool.cuts.iter().any(|c| cut_distance(&c.poly, &p) <= 1e-8) {
            // Cycling guard: reject the duplicate and stop with a bound only.
            duplicate = true;
            break;
        }
        pool.cuts.push(Cut {
            poly: p,
            iteration,
            subproblem_objective: sub_obj,
        });
    }

    let report = match last {
        Some((rel, sol)) => {
            let mut r = extract_solution(
                &rel,
                &sol,
                net,
                mats,
                "digs",
                start.elapsed().as_secs_f64(),
            );
            if failed && r.status == Status::SolverFailure {
                r.status = Status::BoundOnly;
            }
            if duplicate {
                r.status = Status::BoundOnly;
            }
            r
        }
        None => BoundReport {
            method: "digs".into(),
            lower_bound: f64::NEG_INFINITY,
            status: Status::SolverFailure,
            extracted_x: None,
            rank_gap: f64::INFINITY,
            iterations: 0,
            wall_time: start.elapsed().as_secs_f64(),
        },
    };
    (report, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{corpus_case, Override};
    use crate::network::build_network;
    use crate::network::build_opf_matrices;
    use crate::polyprog::build_op2;

    fn setup(name: &str, ovr: &[(&str, &str)]) -> (PowerNetwork, OpfMatrices, PolyProgram) {
        let ovrs: Vec<Override> = ovr
            .iter()
            .map(|(k, v)| Override::parse(k, v).unwrap())
            .collect();
        let case = corpus_case(name, &ovrs).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        let pp = build_op2(&net, &mats);
        (net, mats, pp)
    }

    #[test]
    fn master_empty_pool_equals_level1() {
        let (_, _, pp) = setup("WB2", &[("V2max", "1.022")]);
        let (bound, _, _, _) = solve_master(&pp, &CutPool::default()).unwrap();
        assert!((bound - 888.08).abs() <= 1e-3 * 888.08, "{bound}");
    }

    #[test]
    fn tautological_cut_leaves_bound_unchanged() {
        let (_, _, pp) = setup("WB2", &[("V2max", "1.022")]);
        let (b0, _, _, _) = solve_master(&pp, &CutPool::default()).unwrap();
        let mut pool = CutPool::default();
        pool.cuts.push(Cut {
            poly: Polynomial::constant(1.0),
            iteration: 0,
            subproblem_objective: 0.0,
        });
        let (b1, _, _, _) = solve_master(&pp, &pool).unwrap();
        assert!((b0 - b1).abs() <= 1e-6 * (1.0 + b0.abs()), "{b0} vs {b1}");
    }

    #[test]
    fn subproblem_nonnegative_on_exact_master() {
        // Tight WB2 instance: level-1 already exact, so no violated cut
        // exists and the subproblem optimum is ≈ 0 (from above or slightly
        // below by solver tolerance).
        let (_, _, pp) = setup("WB2", &[("V2max", "0.976")]);
        let (bound, y, _, _) = solve_master(&pp, &CutPool::default()).unwrap();
        let (_, obj) = solve_subproblem(&y, &pp, &CutPool::default()).unwrap();
        let eps = 1e-5 * (1.0 + bound.abs());
        assert!(obj >= -eps, "subproblem objective {obj}");
    }

    #[test]
    fn first_cut_improves_loose_wb2() {
        let (_, _, pp) = setup("WB2", &[("V2max", "1.022")]);
        let mut pool = CutPool::default();
        let (b0, y, _, _) = solve_master(&pp, &pool).unwrap();
        let (p, obj) = solve_subproblem(&y, &pp, &pool).unwrap();
        assert!(obj < -1e-5 * (1.0 + b0.abs()), "expected violated cut, got {obj}");
        pool.cuts.push(Cut {
            poly: p,
            iteration: 0,
            subproblem_objective: obj,
        });
        let (b1, _, _, _) = solve_master(&pp, &pool).unwrap();
        assert!(b1 > b0 + 1e-6, "bound did not improve: {b0} -> {b1}");
    }

    #[test]
    fn eps_infinite_returns_level1_bound() {
        let (net, mats, pp) = setup("WB2", &[("V2max", "1.022")]);
        let opts = DigsOptions {
            eps_rel: f64::INFINITY,
            ..Default::default()
        };
        let (rep, pool) = digs_loop(&pp, &net, &mats, &opts);
        assert!(pool.cuts.is_empty());
        assert_eq!(pool.history.len(), 1);
        assert!((rep.lower_bound - 888.08).abs() <= 1e-3 * 888.08);
    }

    #[test]
    fn wb2_tight_certifies_quickly() {
        let (net, mats, pp) = setup("WB2", &[("V2max", "0.976")]);
        let (rep, pool) = digs_loop(&pp, &net, &mats, &DigsOptions::default());
        assert!(pool.history.len() <= 3, "iterations {}", pool.history.len());
        assert!((rep.lower_bound - 905.76).abs() <= 5e-3 * 905.76, "{}", rep.lower_bound);
        assert_eq!(rep.status, Status::GlobalCertified);
    }

    #[test]
    fn history_is_monotone_and_csv_wellformed() {
        let (net, mats, pp) = setup("WB2", &[("V2max", "1.000")]);
        let (_, pool) = digs_loop(&pp, &net, &mats, &DigsOptions::default());
        for w in pool.history.windows(2) {
            assert!(w[1].bound >= w[0].bound - 1e-6, "{} -> {}", w[0].bound, w[1].bound);
        }
        let csv = pool.history_csv();
        assert!(csv.starts_with("iteration,bound"));
        assert_eq!(csv.lines().count(), pool.history.len() + 1);
    }
}
