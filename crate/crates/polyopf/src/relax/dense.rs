//! Dense moment relaxation of a polynomial program, plus the explicit
//! first-level dual SDP over network matrices.
//!
//! Level convention: the internal parameter `r` is the moment-basis degree
//! (the moment matrix covers monomials up to degree `2r`). The CLI's
//! user-facing "level" maps to `r` per formulation; see [`crate::report`].

use std::collections::HashMap;

use thiserror::Error;

use crate::network::{OpfMatrices, PowerNetwork, SymMatrix};
use crate::polyprog::{Monomial, PolyProgram, Polynomial};
use crate::sdp::{Block, BlockKind, Constraint, Entry, SdpProblem, Sense};

pub const BASIS_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("level r={0} too low: moment degree 2r must cover program degree {1}")]
    LevelTooLow(usize, u32),
    #[error("moment basis of size {0} exceeds the cap {1}")]
    BasisOverflow(usize, usize),
}

/// Ordered monomial basis of degree ≤ r over a variable subset.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    pub monomials: Vec<Monomial>,
    pub index: HashMap<Monomial, usize>,
}

impl MomentBasis {
    pub fn new(vars: &[usize], r: usize) -> Self {
        let mut monomials = vec![Monomial::one()];
        let mut frontier = vec![Monomial::one()];
        for _ in 0..r {
            let mut next = Vec::new();
            for m in &frontier {
                // Extend only with variables ≥ the largest in m to avoid
                // duplicates.
                let lo = m.exps().last().map_or(0, |&(v, _)| v);
                for &v in vars.iter().filter(|&&v| v >= lo) {
                    next.push(m.mul(&Monomial::var(v)));
                }
            }
            monomials.extend(next.iter().cloned());
            frontier = next;
        }
        monomials.sort();
        monomials.dedup();
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MomentBasis { monomials, index }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }
}

/// A built moment relaxation: the SDP plus the bookkeeping required to read
/// moment values back out of a solution.
#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    pub sdp: SdpProblem,
    /// One (basis, PSD block index) pair per moment matrix; dense builds
    /// have exactly one, sparse builds one per clique.
    pub moment_blocks: Vec<(MomentBasis, usize)>,
    /// Representative position of each monomial: (moment-block position in
    /// `moment_blocks`, row, col).
    pub rep: HashMap<Monomial, (usize, usize, usize)>,
    /// Per SDP block, the facial-reduction basis U implied by the program's
    /// equality constraints (`None` for unreduced blocks); see
    /// [`crate::relax::face`].
    pub faces: Vec<Option<nalgebra::DMatrix<f64>>>,
}

impl MomentRelaxation {
    /// Solves the relaxation on its equality-implied face and expands the
    /// solution back to the full block shapes.
    pub fn solve(
        &self,
        opts: &crate::sdp::SdpOptions,
    ) -> Result<crate::sdp::SdpSolution, crate::sdp::SdpError> {
        crate::relax::face::solve_on_face(&self.sdp, &self.faces, opts)
    }

    /// Reads y_γ from solved block values.
    pub fn moment(&self, blocks: &[nalgebra::DMatrix<f64>], m: &Monomial) -> Option<f64> {
        let &(mb, i, j) = self.rep.get(m)?;
        let b = self.moment_blocks[mb].1;
        Some(blocks[b][(i, j)])
    }

    /// All stored moments (representative entries).
    pub fn moments(&self, blocks: &[nalgebra::DMatrix<f64>]) -> HashMap<Monomial, f64> {
        self.rep
            .iter()
            .map(|(m, &(mb, i, j))| {
                let b = self.moment_blocks[mb].1;
                (m.clone(), blocks[b][(i, j)])
            })
            .collect()
    }
}

/// Pushes objective/constraint coefficients at representative moment
/// positions; a coefficient c on monomial γ becomes c·X_ii or (c/2)·X_ij.
fn entry_at(rep: &(usize, usize, usize), block_of: &[usize], c: f64) -> Entry {
    let &(mb, i, j) = rep;
    let coeff = if i == j { c } else { 0.5 * c };
    Entry::new(block_of[mb], i, j, coeff)
}

/// Dense Lasserre moment relaxation at moment-basis degree `r`.
///
/// Moment matrix M_r(y) over the full basis; per inequality g a localizing
/// PSD block of degree r − ⌈deg g/2⌉ linked by equalities (emitted as a
/// scalar `≥` row when that basis is 1×1); per equality h one scalar `=` row
/// for every shift δ with deg(h·δ) ≤ 2r; y₀ = 1.
pub fn build_lasserre(pp: &PolyProgram, r: usize) -> Result<MomentRelaxation, RelaxError> {
    let deg = pp.degree();
    if (2 * r as u32) < deg {
        return Err(RelaxError::LevelTooLow(r, deg));
    }
    let vars: Vec<usize> = (0..pp.num_vars()).collect();
    let basis = MomentBasis::new(&vars, r);
    if basis.len() > BASIS_CAP {
        return Err(RelaxError::BasisOverflow(basis.len(), BASIS_CAP));
    }
    let mut sdp = SdpProblem::new(vec![Block {
        size: basis.len(),
        kind: BlockKind::Psd,
    }]);
    let moment_block = 0usize;
    let eqs: Vec<&Polynomial> = pp.equalities.iter().collect();
    let mut faces = vec![crate::relax::face::face_of_block(&vars, r, &basis, &eqs)];

    // Representative position and intra-block repeat equalities.
    let mut rep: HashMap<Monomial, (usize, usize, usize)> = HashMap::new();
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let gamma = basis.monomials[i].mul(&basis.monomials[j]);
            if let Some(&(_, ri, rj)) = rep.get(&gamma) {
                if (ri, rj) != (i, j) {
                    sdp.add_constraint(Constraint::new(
                        vec![
                            Entry::new(moment_block, ri, rj, rep_coeff(ri, rj)),
                            Entry::new(moment_block, i, j, -rep_coeff(i, j)),
                        ],
                        0.0,
                        Sense::Eq,
                        format!("moment repeat ({ri},{rj})~({i},{j})"),
                    ));
                }
            } else {
                rep.insert(gamma, (0, i, j));
            }
        }
    }
    // y₀ = 1.
    sdp.add_constraint(Constraint::new(
        vec![Entry::new(moment_block, 0, 0, 1.0)],
        1.0,
        Sense::Eq,
        "y0 = 1",
    ));

    let block_of = vec![moment_block];
    // Objective: min Σ f_γ y_γ.
    for (m, c) in pp.objective.terms() {
        sdp.objective.push(entry_at(&rep[m], &block_of, c));
    }
    sdp.objective = crate::sdp::problem::merge_entries(std::mem::take(&mut sdp.objective));

    // Localizing structure per inequality.
    for (gi, g) in pp.inequalities.iter().enumerate() {
        let dg = g.degree() as usize;
        let rloc = r - dg.div_ceil(2);
        let loc_basis = MomentBasis::new(&vars, rloc);
        if loc_basis.len() == 1 {
            let entries: Vec<Entry> = g
                .terms()
                .map(|(m, c)| entry_at(&rep[m], &block_of, c))
                .collect();
            sdp.add_constraint(Constraint::new(entries, 0.0, Sense::Ge, format!("loc g{gi}")));
        } else {
            let lb = sdp.add_block(loc_basis.len(), BlockKind::Psd);
            faces.push(crate::relax::face::face_of_block(&vars, rloc, &loc_basis, &eqs));
            for a in 0..loc_basis.len() {
                for b in a..loc_basis.len() {
                    let shift = loc_basis.monomials[a].mul(&loc_basis.monomials[b]);
                    let mut entries = vec![Entry::new(lb, a, b, rep_coeff(a, b))];
                    for (m, c) in g.terms() {
                        entries.push(entry_at(&rep[&m.mul(&shift)], &block_of, -c));
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
    // Equalities: Σ h_γ y_{γ+δ} = 0 for every shift δ of admissible degree.
    for (hi, h) in pp.equalities.iter().enumerate() {
        let dh = h.degree() as usize;
        let shift_basis = MomentBasis::new(&vars, 2 * r - dh);
        for delta in &shift_basis.monomials {
            let entries: Vec<Entry> = h
                .terms()
                .map(|(m, c)| entry_at(&rep[&m.mul(delta)], &block_of, c))
                .collect();
            sdp.add_constraint(Constraint::new(entries, 0.0, Sense::Eq, format!("loc h{hi}")));
        }
    }

    Ok(MomentRelaxation {
        sdp,
        moment_blocks: vec![(basis, moment_block)],
        rep,
        faces,
    })
}

/// Inverse of the off-diagonal halving in [`entry_at`] when the entry being
/// *defined* (not referenced) sits off-diagonal: a row that should read
/// `X_ab − Σ … = 0` needs coefficient 1 on X_ab, i.e. ½ in upper-triangular
/// convention.
fn rep_coeff(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.5
    }
}

/// The explicit first-level dual SDP over the network matrices (maximize a
/// lower bound φ with one PSD certificate block per structural object).
///
/// Variables: A (2n×2n), B_k (2×2) per generator, C_lm (3×3) per directed
/// flow-limited line, and nonnegative scalars λ̄,λ,γ̄,γ,μ̄,μ per bus. The free
/// multipliers of the derivation are already substituted out
/// (b_k = −2B¹²_k, c_lm = −2C¹²_lm, d_lm = −2C¹³_lm, a_lm = C²²_lm), so the
/// published matrix identity reads, entrywise over (i ≤ j):
///
/// ```text
/// A = Σ_k (c1_k + λ̄_k − λ_k − 2B¹²_k)·Y_k + (γ̄_k − γ_k)·Ȳ_k + (μ̄_k − μ_k)·M_k
///     − Σ_lm 2C¹²_lm·Y_lm + 2C¹³_lm·Ȳ_lm
/// ```
///
/// with couplings B²²_k = c2_k, C²³_lm = 0, C²²_lm = C³³_lm.
pub struct DualFirstLevel {
    pub sdp: SdpProblem,
    /// Block index of A.
    pub a_block: usize,
}

pub fn build_lavaei_low_dual(net: &PowerNetwork, mats: &OpfMatrices) -> DualFirstLevel {
    let n = net.n;
    let mut sdp = SdpProblem::new(Vec::new());
    sdp.maximize = true;
    let a_block = sdp.add_block(2 * n, BlockKind::Psd);
    let b_blocks: Vec<usize> = net.gens.iter().map(|_| sdp.add_block(2, BlockKind::Psd)).collect();
    let c_blocks: Vec<usize> = mats.flows.iter().map(|_| sdp.add_block(3, BlockKind::Psd)).collect();
    // Scalar multipliers as 1×1 PSD blocks, bus-major:
    // λ̄_k, λ_k, γ̄_k, γ_k, μ̄_k, μ_k.
    let mul_blocks: Vec<[usize; 6]> = (0..n)
        .map(|_| std::array::from_fn(|_| sdp.add_block(1, BlockKind::Psd)))
        .collect();

    // Objective (maximize φ):
    //   Σ_G (c1_k P^d_k + c0_k)  − Σ_G B¹¹_k − Σ_L C¹¹_lm
    //   − Σ_N λ̄(Pmax−Pd) + λ(Pd−Pmin) + γ̄(Qmax−Qd) + γ(Qd−Qmin)
    //   − Σ_N μ̄(Vmax)² − μ(Vmin)²
    //   − Σ_L C²²_lm (Smax)² − Σ_G 2B¹²_k P^d_k
    let mut constant = 0.0;
    for (gi, &k) in net.gens.iter().enumerate() {
        let (_, c1, c0) = net.cost[k];
        constant += c1 * net.demand[k].0 + c0;
        sdp.objective.push(Entry::new(b_blocks[gi], 0, 0, -1.0));
        // −2B¹²·Pd with upper-triangular convention: coefficient −Pd on the
        // (0,1) entry contributes −2PdB¹².
        sdp.objective.push(Entry::new(b_blocks[gi], 0, 1, -net.demand[k].0));
    }
    for (fi, _) in mats.flows.iter().enumerate() {
        sdp.objective.push(Entry::new(c_blocks[fi], 0, 0, -1.0));
        let s_max = net.branches[net.flow_limited[fi / 2]].s_max;
        sdp.objective.push(Entry::new(c_blocks[fi], 1, 1, -s_max * s_max));
    }
    for k in 0..n {
        let (pd, qd) = net.demand[k];
        let (pmin, pmax) = net.p_bounds[k];
        let (qmin, qmax) = net.q_bounds[k];
        let (vmin, vmax) = net.v_bounds[k];
        let coeffs = [
            -(pmax - pd),
            -(pd - pmin),
            -(qmax - qd),
            -(qd - qmin),
            -vmax * vmax,
            vmin * vmin,
        ];
        for (s, &c) in coeffs.iter().enumerate() {
            sdp.objective.push(Entry::new(mul_blocks[k][s], 0, 0, c));
        }
    }
    sdp.obj_constant = constant;

    // Matrix identity, one row per (i ≤ j) entry of A.
    let mut rows: Vec<Vec<Entry>> = Vec::new();
    let mut row_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..2 * n {
        for j in i..2 * n {
            row_index.insert((i, j), rows.len());
            rows.push(vec![Entry::new(a_block, i, j, rep_coeff(i, j))]);
            rhs.push(0.0);
        }
    }
    // Helper: add s·M (a SymMatrix over x-space) times a scalar variable
    // entry `var` into the identity rows; signs folded into `s`.
    let add_matrix_times =
        |rows: &mut Vec<Vec<Entry>>, rhs_v: &mut Vec<f64>, m: &SymMatrix, var: Option<(usize, usize, usize)>, s: f64| {
            for &(i, j, v) in &m.entries {
                let row = row_index[&(i, j)];
                match var {
                    Some((blk, r, c)) => {
                        // The scalar multiplier is the (r,c) entry of block
                        // blk; with the ½-convention a coefficient w on an
                        // off-diagonal entry reads w·2·X_rc, so halve.
                        let w = -s * v * if r == c { 1.0 } else { 0.5 };
                        rows[row].push(Entry::new(blk, r, c, w));
                    }
                    None => rhs_v[row] += s * v,
                }
            }
        };
    for k in 0..n {
        let c1 = if net.gens.binary_search(&k).is_ok() {
            net.cost[k].1
        } else {
            0.0
        };
        // Constant part: c1_k·Y_k moves to the rhs.
        add_matrix_times(&mut rows, &mut rhs, &mats.yk[k], None, c1);
        let [lb_hi, lb_lo, gb_hi, gb_lo, mb_hi, mb_lo] = mul_blocks[k];
        add_matrix_times(&mut rows, &mut rhs, &mats.yk[k], Some((lb_hi, 0, 0)), 1.0);
        add_matrix_times(&mut rows, &mut rhs, &mats.yk[k], Some((lb_lo, 0, 0)), -1.0);
        add_matrix_times(&mut rows, &mut rhs, &mats.ybar_k[k], Some((gb_hi, 0, 0)), 1.0);
        add_matrix_times(&mut rows, &mut rhs, &mats.ybar_k[k], Some((gb_lo, 0, 0)), -1.0);
        add_matrix_times(&mut rows, &mut rhs, &mats.mk[k], Some((mb_hi, 0, 0)), 1.0);
        add_matrix_times(&mut rows, &mut rhs, &mats.mk[k], Some((mb_lo, 0, 0)), -1.0);
    }
    for (gi, &k) in net.gens.iter().enumerate() {
        // −2B¹²_k·Y_k: the scalar is 2·(0,1)-entry in ½-convention, so pass
        // the (0,1) coordinate with s = −2 and let the helper halve once:
        // w = −(−2)·v·½ = v ⇒ net coefficient +2B¹² on tr side… verified in
        // the Theorem-1 equivalence test.
        add_matrix_times(&mut rows, &mut rhs, &mats.yk[k], Some((b_blocks[gi], 0, 1)), -2.0);
    }
    for (fi, (_, _, ylm, ybarlm)) in mats.flows.iter().enumerate() {
        add_matrix_times(&mut rows, &mut rhs, ylm, Some((c_blocks[fi], 0, 1)), -2.0);
        add_matrix_times(&mut rows, &mut rhs, ybarlm, Some((c_blocks[fi], 0, 2)), -2.0);
    }
    for (row, entries) in rows.into_iter().enumerate() {
        sdp.add_constraint(Constraint::new(entries, rhs[row], Sense::Eq, format!("A identity {row}")));
    }
    // Couplings.
    for (gi, &k) in net.gens.iter().enumerate() {
        sdp.add_constraint(Constraint::new(
            vec![Entry::new(b_blocks[gi], 1, 1, 1.0)],
            net.cost[k].0,
            Sense::Eq,
            format!("B22 = c2 (bus {k})"),
        ));
    }
    for (fi, _) in mats.flows.iter().enumerate() {
        sdp.add_constraint(Constraint::new(
            vec![Entry::new(c_blocks[fi], 1, 2, 1.0)],
            0.0,
            Sense::Eq,
            format!("C23 = 0 ({fi})"),
        ));
        sdp.add_constraint(Constraint::new(
            vec![
                Entry::new(c_blocks[fi], 1, 1, 1.0),
                Entry::new(c_blocks[fi], 2, 2, -1.0),
            ],
            0.0,
            Sense::Eq,
            format!("C22 = C33 ({fi})"),
        ));
    }
    DualFirstLevel { sdp, a_block }
}


#[cfg(test)]
mod debug_tests {
    use super::*;
    use crate::case_io::corpus_case;
    use crate::network::{build_network, build_opf_matrices};
    use crate::polyprog::build_op4;
    use crate::sdp::SdpOptions;

    #[test]
    fn debug_wb2_op4_r2() {
        let case = corpus_case("WB2", &[crate::case_io::Override::parse("V2max", "1.022").unwrap()]).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        let pp = build_op4(&net, &mats);
        let rel = build_lasserre(&pp, 2).unwrap();
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
