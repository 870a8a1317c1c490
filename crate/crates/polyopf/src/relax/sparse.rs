//! Clique-sparse moment hierarchy, PSD block decomposition by matrix
//! completion, and solution extraction with rank-1 certification.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;

use crate::network::{OpfMatrices, PowerNetwork};
use crate::polyprog::{Monomial, PolyProgram};
use crate::relax::chordal::CliqueDecomposition;
use crate::relax::dense::{MomentBasis, MomentRelaxation, RelaxError, BASIS_CAP};
use crate::report::{BoundReport, Status};
use crate::sdp::{Block, BlockKind, Constraint, Entry, SdpProblem, SdpSolution, Sense};

pub const RANK_TOL: f64 = 1e-4;
pub const CERT_TOL: f64 = 5e-3;
pub const FEAS_TOL: f64 = 1e-6;
pub const STITCH_TOL: f64 = 1e-3;

fn rep_coeff(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.5
    }
}

fn entry_at(rep: (usize, usize, usize), block_of: &[usize], c: f64) -> Entry {
    let (mb, i, j) = rep;
    Entry::new(block_of[mb], i, j, c * rep_coeff(i, j))
}

/// Sparse Lasserre relaxation at moment-basis degree `r`: one moment matrix
/// per clique, localizing structure on each constraint's assigned clique,
/// and consistency equalities identifying shared monomials across cliques.
pub fn build_sparse_lasserre(
    pp: &PolyProgram,
    r: usize,
    cd: &CliqueDecomposition,
) -> Result<MomentRelaxation, RelaxError> {
    let deg = pp.degree();
    if (2 * r as u32) < deg {
        return Err(RelaxError::LevelTooLow(r, deg));
    }
    let mut sdp = SdpProblem::new(Vec::new());
    let mut moment_blocks = Vec::new();
    let mut block_of = Vec::new();
    let mut bases = Vec::new();
    let mut faces = Vec::new();
    // Equalities grouped by assigned clique: only those shift rows exist, so
    // only they may justify a facial reduction of that clique's blocks.
    let eqs_of_clique: Vec<Vec<&crate::polyprog::Polynomial>> = (0..cd.cliques.len())
        .map(|c| {
            pp.equalities
                .iter()
                .enumerate()
                .filter(|&(hi, _)| cd.eq_clique[hi] == c)
                .map(|(_, h)| h)
                .collect()
        })
        .collect();
    for (ci, clique) in cd.cliques.iter().enumerate() {
        let basis = MomentBasis::new(clique, r);
        if basis.len() > BASIS_CAP {
            return Err(RelaxError::BasisOverflow(basis.len(), BASIS_CAP));
        }
        let b = sdp.add_block(basis.len(), BlockKind::Psd);
        block_of.push(b);
        faces.push(crate::relax::face::face_of_block(
            clique,
            r,
            &basis,
            &eqs_of_clique[ci],
        ));
        moment_blocks.push((basis.clone(), b));
        bases.push(basis);
    }

    // Global representative per monomial; first occurrence wins, later
    // occurrences (same or other clique) tied by equality rows.
    let mut rep: HashMap<Monomial, (usize, usize, usize)> = HashMap::new();
    for (mb, basis) in bases.iter().enumerate() {
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let gamma = basis.monomials[i].mul(&basis.monomials[j]);
                if let Some(&(rmb, ri, rj)) = rep.get(&gamma) {
                    if (rmb, ri, rj) != (mb, i, j) {
                        sdp.add_constraint(Constraint::new(
                            vec![
                                Entry::new(block_of[rmb], ri, rj, rep_coeff(ri, rj)),
                                Entry::new(block_of[mb], i, j, -rep_coeff(i, j)),
                            ],
                            0.0,
                            Sense::Eq,
                            format!("consistency c{rmb}({ri},{rj}) = c{mb}({i},{j})"),
                        ));
                    }
                } else {
                    rep.insert(gamma, (mb, i, j));
                }
            }
        }
    }
    sdp.add_constraint(Constraint::new(
        vec![Entry::new(block_of[0], 0, 0, 1.0)],
        1.0,
        Sense::Eq,
        "y0 = 1",
    ));

    for (m, c) in pp.objective.terms() {
        let rp = *rep.get(m).expect("objective monomial not covered by cliques");
        sdp.objective.push(entry_at(rp, &block_of, c));
    }
    sdp.objective = crate::sdp::problem::merge_entries(std::mem::take(&mut sdp.objective));

    for (gi, g) in pp.inequalities.iter().enumerate() {
        let clique = cd.ineq_clique[gi];
        let dg = g.degree() as usize;
        let loc_basis = MomentBasis::new(&cd.cliques[clique], r - dg.div_ceil(2));
        if loc_basis.len() == 1 {
            let entries: Vec<Entry> = g
                .terms()
                .map(|(m, c)| entry_at(rep[m], &block_of, c))
                .collect();
            sdp.add_constraint(Constraint::new(entries, 0.0, Sense::Ge, format!("loc g{gi}")));
        } else {
            let lb = sdp.add_block(loc_basis.len(), BlockKind::Psd);
            faces.push(crate::relax::face::face_of_block(
                &cd.cliques[clique],
                r - dg.div_ceil(2),
                &loc_basis,
                &eqs_of_clique[clique],
            ));
            for a in 0..loc_basis.len() {
                for b in a..loc_basis.len() {
                    let shift = loc_basis.monomials[a].mul(&loc_basis.monomials[b]);
                    let mut entries = vec![Entry::new(lb, a, b, rep_coeff(a, b))];
                    for (m, c) in g.terms() {
                        entries.push(entry_at(rep[&m.mul(&shift)], &block_of, -c));
                    }
                    sdp.add_constraint(Constraint::new(
                        entries,
                        0.0,
                        Sense::Eq,
                        format!("loc g{gi} link ({a},{b})"),
                    ));
                }
            }
        }
    }
    for (hi, h) in pp.equalities.iter().enumerate() {
        let clique = cd.eq_clique[hi];
        let dh = h.degree() as usize;
        let shift_basis = MomentBasis::new(&cd.cliques[clique], 2 * r - dh);
        for delta in &shift_basis.monomials {
            let entries: Vec<Entry> = h
                .terms()
                .map(|(m, c)| entry_at(rep[&m.mul(delta)], &block_of, c))
                .collect();
            sdp.add_constraint(Constraint::new(entries, 0.0, Sense::Eq, format!("loc h{hi}")));
        }
    }

    Ok(MomentRelaxation {
        sdp,
        moment_blocks,
        rep,
        faces,
    })
}

/// Replaces one PSD block by clique-indexed smaller blocks plus overlap
/// equalities (matrix completion). `cliques` must cover the aggregate
/// sparsity of the block (every referenced entry inside some clique); the
/// optimal value is unchanged.
pub fn decompose_psd(sdp: &SdpProblem, block: usize, cliques: &[Vec<usize>]) -> SdpProblem {
    if cliques.len() <= 1 {
        return sdp.clone();
    }
    let mut out = SdpProblem::new(Vec::new());
    out.maximize = sdp.maximize;
    out.obj_constant = sdp.obj_constant;
    // Re-add all blocks, replacing `block` by the clique blocks.
    let mut block_map: Vec<Option<usize>> = Vec::new();
    for (bi, b) in sdp.blocks.iter().enumerate() {
        if bi == block {
            block_map.push(None);
        } else {
            block_map.push(Some(out.add_block(b.size, b.kind)));
        }
    }
    let clique_blocks: Vec<usize> = cliques
        .iter()
        .map(|c| out.add_block(c.len(), BlockKind::Psd))
        .collect();
    let local: Vec<HashMap<usize, usize>> = cliques
        .iter()
        .map(|c| c.iter().enumerate().map(|(p, &v)| (v, p)).collect())
        .collect();
    // Entry (i,j) of the old block → first clique containing both.
    let place = |i: usize, j: usize| -> (usize, usize, usize) {
        for (k, l) in local.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (l.get(&i), l.get(&j)) {
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                return (clique_blocks[k], a, b);
            }
        }
        panic!("entry ({i},{j}) of decomposed block not covered by any clique");
    };
    let map_entry = |e: &Entry| -> Entry {
        if e.block == block {
            let (b, i, j) = place(e.row, e.col);
            Entry::new(b, i, j, e.coeff)
        } else {
            Entry::new(block_map[e.block].unwrap(), e.row, e.col, e.coeff)
        }
    };
    out.objective = sdp.objective.iter().map(&map_entry).collect();
    for c in &sdp.constraints {
        out.add_constraint(Constraint::new(
            c.entries.iter().map(&map_entry).collect(),
            c.rhs,
            c.sense,
            c.label.clone(),
        ));
    }
    // Overlap equalities: every (i,j) pair contained in more than one clique
    // is tied to its first placement.
    let mut seen: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
    for (k, c) in cliques.iter().enumerate() {
        for (a, &i) in c.iter().enumerate() {
            for &j in &c[a..] {
                let key = if i <= j { (i, j) } else { (j, i) };
                let (la, lb) = (local[k][&key.0], local[k][&key.1]);
                let (la, lb) = if la <= lb { (la, lb) } else { (lb, la) };
                let here = (clique_blocks[k], la, lb);
                if let Some(&first) = seen.get(&key) {
                    if first != here {
                        out.add_constraint(Constraint::new(
                            vec![
                                Entry::new(first.0, first.1, first.2, rep_coeff(first.1, first.2)),
                                Entry::new(here.0, here.1, here.2, -rep_coeff(here.1, here.2)),
                            ],
                            0.0,
                            Sense::Eq,
                            format!("overlap ({},{})", key.0, key.1),
                        ));
                    }
                } else {
                    seen.insert(key, here);
                }
            }
        }
    }
    out
}

/// Aggregate sparsity cliques of one block of an SDP: chordal decomposition
/// of the graph whose edges are the off-diagonal entries referenced by the
/// objective or any constraint.
pub fn aggregate_cliques(sdp: &SdpProblem, block: usize) -> Vec<Vec<usize>> {
    use crate::relax::chordal::{chordal_cliques, CspGraph};
    let n = sdp.blocks[block].size;
    let mut adj = vec![BTreeSet::new(); n];
    let mut touch = |e: &Entry| {
        if e.block == block && e.row != e.col {
            adj[e.row].insert(e.col);
            adj[e.col].insert(e.row);
        }
    };
    for e in &sdp.objective {
        touch(e);
    }
    for c in &sdp.constraints {
        for e in &c.entries {
            touch(e);
        }
    }
    let g = CspGraph { n, adj };
    let empty = PolyProgram {
        objective: crate::polyprog::Polynomial::zero(),
        inequalities: vec![],
        equalities: vec![],
        var_names: (0..n).map(|i| format!("v{i}")).collect(),
    };
    chordal_cliques(&g, &empty, 1).cliques
}

/// Per-clique order-1 voltage information recovered from a solved moment
/// relaxation.
struct CliqueVoltages {
    /// Buses whose (Re, Im) pair lies inside the clique, with candidate
    /// complex values (defined up to one common rotation of the clique).
    buses: Vec<usize>,
    values: Vec<(f64, f64)>,
    rank_gap: f64,
}

fn clique_voltages(
    rel: &MomentRelaxation,
    sol: &SdpSolution,
    mb: usize,
    n: usize,
    rank_tol: f64,
) -> Option<CliqueVoltages> {
    let basis = &rel.moment_blocks[mb].0;
    // Clique variable set = supports of the degree-1 basis monomials.
    let vars: Vec<usize> = basis
        .monomials
        .iter()
        .filter(|m| m.degree() == 1)
        .map(|m| m.exps()[0].0)
        .collect();
    let buses: Vec<usize> = (0..n)
        .filter(|&k| vars.contains(&k) && vars.contains(&(n + k)))
        .collect();
    if buses.is_empty() {
        return Some(CliqueVoltages {
            buses,
            values: vec![],
            rank_gap: 0.0,
        });
    }
    // Voltage coordinate list: Re of each bus then Im of each bus.
    let coords: Vec<usize> = buses
        .iter()
        .map(|&k| k)
        .chain(buses.iter().map(|&k| n + k))
        .collect();
    let d = coords.len();
    let mut b = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        for c in a..d {
            let m = Monomial::from_exps(vec![(coords[a], 1), (coords[c], 1)]);
            let v = rel.moment(&sol.block_values, &m)?;
            b[(a, c)] = v;
            b[(c, a)] = v;
        }
    }
    let eig = b.symmetric_eigen();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let l1 = eig.eigenvalues[idx[0]].max(0.0);
    let l2 = if d > 1 { eig.eigenvalues[idx[1]].max(0.0) } else { 0.0 };
    let l3 = if d > 2 { eig.eigenvalues[idx[2]].max(0.0) } else { 0.0 };
    if l1 <= 0.0 {
        return None;
    }
    // Accept genuine rank 1 (λ2/λ1 small) or a rotation orbit (λ3/λ1 small
    // with the top-2 space closed under the per-bus quarter turn J); both
    // yield v = √(λ1+λ2)·u1 up to rotation, since any unit vector of the
    // J-invariant top space is a rotation of v/|v|.
    let direct = l2 / l1 <= rank_tol;
    let orbit = l3 / l1 <= rank_tol;
    if !direct && !orbit {
        return Some(CliqueVoltages {
            buses,
            values: vec![],
            rank_gap: if d > 2 { l3 / l1 } else { l2 / l1 },
        });
    }
    let u1 = eig.eigenvectors.column(idx[0]);
    let scale = if direct { l1.sqrt() } else { (l1 + l2).sqrt() };
    let nb = buses.len();
    let values: Vec<(f64, f64)> = (0..nb)
        .map(|p| (scale * u1[p], scale * u1[nb + p]))
        .collect();
    let rank_gap = if direct && !orbit {
        l2 / l1
    } else {
        l3 / l1
    };
    Some(CliqueVoltages {
        buses,
        values,
        rank_gap,
    })
}

/// A few damped Gauss-Newton steps on the violated constraint set.
fn polish(net: &PowerNetwork, mats: &OpfMatrices, x: &mut Vec<f64>) {
    let nv = 2 * net.n;
    for _ in 0..12 {
        // Collect active residuals r_i(x) (positive = violation) and their
        // gradients; all constraints are quadratic forms q(x) = xᵀAx + c.
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        let grad_of = |a: &crate::network::SymMatrix, x: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; nv];
            for &(i, j, v) in &a.entries {
                if i == j {
                    g[i] += 2.0 * v * x[i];
                } else {
                    g[i] += 2.0 * v * x[j];
                    g[j] += 2.0 * v * x[i];
                }
            }
            g
        };
        for k in 0..net.n {
            let p = mats.yk[k].quad(x) + net.demand[k].0;
            let q = mats.ybar_k[k].quad(x) + net.demand[k].1;
            let v2 = mats.mk[k].quad(x);
            let (pmin, pmax) = net.p_bounds[k];
            let (qmin, qmax) = net.q_bounds[k];
            let (vmin, vmax) = net.v_bounds[k];
            for (val, lo, hi, mat) in [
                (p, pmin, pmax, &mats.yk[k]),
                (q, qmin, qmax, &mats.ybar_k[k]),
                (v2, vmin * vmin, vmax * vmax, &mats.mk[k]),
            ] {
                if val < lo - 1e-12 {
                    rows.push((val - lo, grad_of(mat, x)));
                } else if val > hi + 1e-12 {
                    rows.push((val - hi, grad_of(mat, x)));
                }
            }
        }
        for (fi, (_, _, ylm, ybarlm)) in mats.flows.iter().enumerate() {
            let s_max = net.branches[net.flow_limited[fi / 2]].s_max;
            if s_max <= 0.0 {
                continue;
            }
            let p = ylm.quad(x);
            let q = ybarlm.quad(x);
            let s2 = p * p + q * q;
            if s2 > s_max * s_max + 1e-12 {
                let gp = grad_of(ylm, x);
                let gq = grad_of(ybarlm, x);
                let g: Vec<f64> = (0..nv).map(|t| 2.0 * p * gp[t] + 2.0 * q * gq[t]).collect();
                rows.push((s2 - s_max * s_max, g));
            }
        }
        if rows.is_empty() {
            return;
        }
        let m = rows.len();
        let jac = DMatrix::<f64>::from_fn(m, nv, |i, j| rows[i].1[j]);
        let res = nalgebra::DVector::<f64>::from_fn(m, |i, _| rows[i].0);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut a = jtj;
        let damp = 1e-9 * (1.0 + a.diagonal().amax());
        for i in 0..nv {
            a[(i, i)] += damp;
        }
        let dx = match a.cholesky() {
            Some(ch) => ch.solve(&jtr),
            None => return,
        };
        for t in 0..nv {
            x[t] -= dx[t];
        }
    }
}

/// Extracts a candidate global solution from a solved (dense or sparse)
/// moment relaxation, stitches cliques, canonicalizes the global phase, and
/// certifies against the bound.
pub fn extract_solution(
    rel: &MomentRelaxation,
    sol: &SdpSolution,
    net: &PowerNetwork,
    mats: &OpfMatrices,
    method: &str,
    wall_time: f64,
) -> BoundReport {
    let bound = sol.primal_obj;
    let n = net.n;
    let mut report = BoundReport {
        method: method.to_string(),
        lower_bound: bound,
        status: Status::BoundOnly,
        extracted_x: None,
        rank_gap: f64::INFINITY,
        iterations: sol.iterations,
        wall_time,
    };
    if sol.status != crate::sdp::SdpStatus::Optimal {
        report.status = Status::SolverFailure;
        return report;
    }
    let mut rank_gap = 0.0f64;
    let mut per_clique = Vec::new();
    for mb in 0..rel.moment_blocks.len() {
        match clique_voltages(rel, sol, mb, n, RANK_TOL) {
            Some(cv) => {
                rank_gap = rank_gap.max(cv.rank_gap);
                if cv.values.is_empty() && !cv.buses.is_empty() {
                    // Rank condition failed for this clique.
                    report.rank_gap = rank_gap;
                    return report;
                }
                per_clique.push(cv);
            }
            None => {
                report.rank_gap = rank_gap;
                return report;
            }
        }
    }
    report.rank_gap = rank_gap;

    // Stitch: rotate each clique's candidate onto the assembled solution via
    // the overlap phase (2-D Procrustes = complex argument alignment).
    let mut v: Vec<Option<(f64, f64)>> = vec![None; n];
    for cv in &per_clique {
        if cv.buses.is_empty() {
            continue;
        }
        let mut acc = (0.0f64, 0.0f64); // Σ V_glob · conj(V_cand)
        for (p, &bus) in cv.buses.iter().enumerate() {
            if let Some((gr, gi)) = v[bus] {
                let (cr, ci) = cv.values[p];
                acc.0 += gr * cr + gi * ci;
                acc.1 += gi * cr - gr * ci;
            }
        }
        let norm = (acc.0 * acc.0 + acc.1 * acc.1).sqrt();
        let (ct, st) = if norm > 0.0 {
            (acc.0 / norm, acc.1 / norm)
        } else {
            (1.0, 0.0)
        };
        for (p, &bus) in cv.buses.iter().enumerate() {
            let (cr, ci) = cv.values[p];
            let rot = (ct * cr - st * ci, st * cr + ct * ci);
            match v[bus] {
                Some((gr, gi)) => {
                    let dev = ((gr - rot.0).powi(2) + (gi - rot.1).powi(2)).sqrt();
                    if dev > STITCH_TOL * (1.0 + (gr * gr + gi * gi).sqrt()) {
                        // Inconsistent overlap: degrade to BoundOnly.
                        return report;
                    }
                }
                None => v[bus] = Some(rot),
            }
        }
    }
    if v.iter().any(|x| x.is_none()) {
        return report;
    }
    // Canonical global phase: Im V = 0 and Re V ≥ 0 at the lowest generator
    // bus.
    let ref_bus = net.gens.first().copied().unwrap_or(0);
    let (rr, ri) = v[ref_bus].unwrap();
    let mag = (rr * rr + ri * ri).sqrt();
    if mag > 0.0 {
        let (ct, st) = (rr / mag, -ri / mag);
        for val in v.iter_mut().flatten() {
            *val = (ct * val.0 - st * val.1, st * val.0 + ct * val.1);
        }
    }
    let mut x: Vec<f64> = (0..n)
        .map(|k| v[k].unwrap().0)
        .chain((0..n).map(|k| v[k].unwrap().1))
        .collect();
    polish(net, mats, &mut x);
    let feas = crate::network::residuals(net, mats, &x).expect("extracted x has full dimension");
    report.extracted_x = Some(x);
    if feas.max_violation <= FEAS_TOL
        && (feas.objective - bound).abs() <= CERT_TOL * bound.abs().max(1.0)
    {
        report.status = Status::GlobalCertified;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{corpus_case, Override};
    use crate::network::{build_network, build_opf_matrices};
    use crate::polyprog::{build_op2, build_op4};
    use crate::relax::chordal::{build_csp, chordal_cliques};
    use crate::relax::dense::build_lasserre;
    use crate::sdp::{solve, SdpOptions, SdpStatus};

    fn setup(name: &str, ovr: &[(&str, &str)]) -> (PowerNetwork, OpfMatrices) {
        let ovrs: Vec<Override> = ovr
            .iter()
            .map(|(k, v)| Override::parse(k, v).unwrap())
            .collect();
        let case = corpus_case(name, &ovrs).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        (net, mats)
    }

    #[test]
    fn sparse_equals_dense_level1_op2() {
        for name in ["WB2", "LMBM3", "WB5"] {
            let (net, mats) = setup(name, &[]);
            let pp = build_op2(&net, &mats);
            let dense = build_lasserre(&pp, 1).unwrap();
            let ds = dense.solve(&SdpOptions::default()).unwrap();
            assert_eq!(ds.status, SdpStatus::Optimal, "{name} dense");
            let g = build_csp(&pp);
            let cd = chordal_cliques(&g, &pp, 1);
            let sparse = build_sparse_lasserre(&pp, 1, &cd).unwrap();
            sparse.sdp.validate();
            let ss = sparse.solve(&SdpOptions::default()).unwrap();
            assert_eq!(ss.status, SdpStatus::Optimal, "{name} sparse");
            assert!(
                (ss.primal_obj - ds.primal_obj).abs() <= 1e-5 * (1.0 + ds.primal_obj.abs()),
                "{name}: sparse {} dense {}",
                ss.primal_obj,
                ds.primal_obj
            );
        }
    }

    #[test]
    fn single_clique_degenerates_to_dense() {
        let (net, mats) = setup("WB2", &[]);
        let pp = build_op2(&net, &mats);
        let nv = pp.num_vars();
        let cd = CliqueDecomposition {
            cliques: vec![(0..nv).collect()],
            ordering: (0..nv).collect(),
            ineq_clique: vec![0; pp.inequalities.len()],
            eq_clique: vec![0; pp.equalities.len()],
        };
        let sparse = build_sparse_lasserre(&pp, 1, &cd).unwrap();
        let dense = build_lasserre(&pp, 1).unwrap();
        assert_eq!(
            sparse.moment_blocks[0].0.monomials,
            dense.moment_blocks[0].0.monomials
        );
        let ss = sparse.solve(&SdpOptions::default()).unwrap();
        let ds = dense.solve(&SdpOptions::default()).unwrap();
        assert!((ss.primal_obj - ds.primal_obj).abs() <= 1e-5 * (1.0 + ds.primal_obj.abs()));
    }

    #[test]
    fn decompose_tridiagonal_band() {
        // min tr(X) s.t. banded constraints; path cliques give four 2×2
        // blocks + 3 overlap equalities, same optimum.
        let mut p = SdpProblem::new(vec![Block {
            size: 5,
            kind: BlockKind::Psd,
        }]);
        for i in 0..5 {
            p.objective.push(Entry::new(0, i, i, 1.0));
        }
        for i in 0..4 {
            p.add_constraint(Constraint::new(
                vec![Entry::new(0, i, i + 1, 0.5)],
                1.0,
                Sense::Eq,
                format!("offdiag {i}"),
            ));
        }
        let cliques: Vec<Vec<usize>> = (0..4).map(|i| vec![i, i + 1]).collect();
        let d = decompose_psd(&p, 0, &cliques);
        assert_eq!(
            d.blocks.iter().filter(|b| b.size == 2).count(),
            4,
            "four 2x2 blocks"
        );
        let overlap_rows = d
            .constraints
            .iter()
            .filter(|c| c.label.starts_with("overlap"))
            .count();
        assert_eq!(overlap_rows, 3);
        let a = solve(&p, &SdpOptions::default()).unwrap();
        let b = solve(&d, &SdpOptions::default()).unwrap();
        assert_eq!(a.status, SdpStatus::Optimal);
        assert_eq!(b.status, SdpStatus::Optimal);
        assert!((a.primal_obj - b.primal_obj).abs() <= 1e-4 * (1.0 + a.primal_obj.abs()));
    }

    #[test]
    fn decompose_single_clique_is_identity() {
        let p = SdpProblem::new(vec![Block {
            size: 3,
            kind: BlockKind::Psd,
        }]);
        let d = decompose_psd(&p, 0, &[vec![0, 1, 2]]);
        assert_eq!(d.blocks.len(), 1);
    }

    #[test]
    fn synthetic_rank_one_recovers_x() {
        // Build a rank-1 moment "solution" from a known x on WB2 and check
        // extraction returns it up to phase.
        let (net, mats) = setup("WB2", &[("V2max", "0.976")]);
        let pp = build_op2(&net, &mats);
        let rel = build_lasserre(&pp, 1).unwrap();
        // Feasible-ish voltage point.
        let xv = vec![1.02, 0.97, 0.0, -0.05];
        let z = crate::polyprog::lift_op4_point(&net, &mats, &xv);
        let basis = &rel.moment_blocks[0].0;
        let zfull: Vec<f64> = basis
            .monomials
            .iter()
            .map(|m| m.eval(&z))
            .collect();
        let zvec = nalgebra::DVector::from_vec(zfull);
        let xm = &zvec * zvec.transpose();
        let feas = crate::network::residuals(&net, &mats, &xv).unwrap();
        let sol = SdpSolution {
            status: SdpStatus::Optimal,
            iterations: 0,
            primal_obj: feas.objective,
            dual_obj: feas.objective,
            block_values: vec![xm],
            y: vec![],
            s_blocks: vec![],
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            history: vec![],
            dropped_rows: vec![],
            failure: None,
        };
        let rep = extract_solution(&rel, &sol, &net, &mats, "test", 0.0);
        let got = rep.extracted_x.expect("extraction");
        // Compare complex voltages up to global phase: extraction
        // canonicalizes, so rotate xv the same way.
        let obj_at = crate::network::residuals(&net, &mats, &got).unwrap().objective;
        assert!((obj_at - feas.objective).abs() <= 1e-6 * (1.0 + feas.objective.abs()));
        assert!(rep.rank_gap <= 1e-10);
        for k in 0..net.n {
            let want = (xv[k] * xv[k] + xv[net.n + k] * xv[net.n + k]).sqrt();
            let is = (got[k] * got[k] + got[net.n + k] * got[net.n + k]).sqrt();
            assert!((want - is).abs() < 1e-8);
        }
    }

    #[test]
    fn wb2_tight_case_certifies() {
        let (net, mats) = setup("WB2", &[("V2max", "0.976")]);
        let pp = build_op2(&net, &mats);
        let rel = build_lasserre(&pp, 1).unwrap();
        let sol = rel.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let rep = extract_solution(&rel, &sol, &net, &mats, "dense-1", 0.0);
        assert!(
            (rep.lower_bound - 905.76).abs() <= 5e-3 * 905.76,
            "bound {}",
            rep.lower_bound
        );
        assert_eq!(rep.status, Status::GlobalCertified, "rank gap {}", rep.rank_gap);
    }

    #[test]
    fn wb2_loose_case_is_bound_only() {
        let (net, mats) = setup("WB2", &[("V2max", "1.022")]);
        let pp = build_op2(&net, &mats);
        let rel = build_lasserre(&pp, 1).unwrap();
        let sol = rel.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let rep = extract_solution(&rel, &sol, &net, &mats, "dense-1", 0.0);
        assert_eq!(rep.status, Status::BoundOnly);
    }

    #[test]
    fn lmbm3_op4_level1_certifies() {
        let (net, mats) = setup("LMBM3", &[("S23max", "28.35")]);
        let pp = build_op4(&net, &mats);
        let g = build_csp(&pp);
        let cd = chordal_cliques(&g, &pp, 2);
        let rel = build_sparse_lasserre(&pp, 2, &cd).unwrap();
        let sol = rel.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let rep = extract_solution(&rel, &sol, &net, &mats, "sparse-op4-1", 0.0);
        assert!(
            (rep.lower_bound - 10294.88).abs() <= 5e-3 * 10294.88,
            "bound {}",
            rep.lower_bound
        );
        assert_eq!(rep.status, Status::GlobalCertified, "rank gap {}", rep.rank_gap);
    }
}

#[cfg(test)]
mod debug_tests {
    use super::*;
    use crate::relax::chordal::{build_csp, chordal_cliques};
    use crate::polyprog::build_op4;
    use crate::sdp::SdpOptions;

    #[test]
    fn debug_lmbm3_sparse() {
        let ovrs = vec![crate::case_io::Override::parse("S23max", "28.35").unwrap()];
        let case = crate::case_io::corpus_case("LMBM3", &ovrs).unwrap();
        let net = crate::network::build_network(&case).unwrap();
        let mats = crate::network::build_opf_matrices(&net);
        let pp = build_op4(&net, &mats);
        let g = build_csp(&pp);
        let cd = chordal_cliques(&g, &pp, 2);
        eprintln!("cliques: {:?}", cd.cliques);
        let rel = build_sparse_lasserre(&pp, 2, &cd).unwrap();
        for (bi, f) in rel.faces.iter().enumerate() {
            let n = rel.sdp.blocks[bi].size;
            match f {
                Some(u) => eprintln!("block {bi}: {n} -> {}", u.ncols()),
                None => eprintln!("block {bi}: {n} (no reduction)"),
            }
        }
        let (red, _map, dropped) = crate::relax::face::reduce_sdp(&rel.sdp, &rel.faces);
        eprintln!("rows {} -> {} (dropped {})", rel.sdp.constraints.len(), red.constraints.len(), dropped.len());
        let sol = rel.solve(&SdpOptions { verbose: true, ..Default::default() }).unwrap();
        eprintln!("status {:?} iters {} primal {} dual {} pres {:.3e} dres {:.3e} gap {:.3e}",
            sol.status, sol.iterations, sol.primal_obj, sol.dual_obj,
            sol.primal_residual, sol.dual_residual, sol.gap);
    }
}
