//! Facial reduction of moment relaxations driven by equality constraints.
//!
//! An equality h = 0 of degree d forces, at moment-basis degree k, the
//! moment (or localizing) matrix to annihilate every coefficient vector of
//! h·m with deg(h·m) ≤ k: the corresponding linear functionals are exactly
//! the imposed shift rows L(h·δ) = 0. The feasible region therefore lives
//! on a proper face of the PSD cone and has no relative-interior point in
//! the full cone, which ruins the conditioning of interior-point methods
//! (the Schur system turns singular as the barrier parameter collapses).
//!
//! The cure is to restrict each affected block to its face up front:
//! compute an orthonormal basis U of the common null space's complement and
//! substitute X = U·X̃·Uᵀ. The substitution is lossless — the null vectors
//! are implied by the constraint rows themselves — and restores a strictly
//! feasible point for the reduced problem whenever the original program's
//! feasible set has one on its variety.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::polyprog::Polynomial;
use crate::sdp::problem::merge_entries;
use crate::sdp::{solve, Block, Entry, SdpOptions, SdpProblem, SdpSolution};

use super::dense::MomentBasis;

/// Orthonormal basis of the face of a moment/localizing block of basis
/// degree `k` over `vars`, given the equality polynomials whose shift rows
/// are imposed for that block. Returns `None` when the block is not reduced
/// (no null vectors).
pub fn face_of_block(
    vars: &[usize],
    k: usize,
    basis: &MomentBasis,
    eqs: &[&Polynomial],
) -> Option<DMatrix<f64>> {
    let n = basis.len();
    let mut nulls: Vec<DVector<f64>> = Vec::new();
    for h in eqs {
        let dh = h.degree() as usize;
        if dh > k {
            continue;
        }
        let mults = MomentBasis::new(vars, k - dh);
        for m in &mults.monomials {
            let mut v = DVector::<f64>::zeros(n);
            let mut ok = true;
            for (mono, c) in h.terms() {
                match basis.index.get(&mono.mul(m)) {
                    Some(&i) => v[i] += c,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && v.amax() > 0.0 {
                nulls.push(v);
            }
        }
    }
    if nulls.is_empty() {
        return None;
    }
    // Complement of span{nulls} via the spectral decomposition of N·Nᵀ.
    let mut p = DMatrix::<f64>::zeros(n, n);
    for v in &nulls {
        let vn = v / v.norm();
        p += &vn * vn.transpose();
    }
    let e = p.symmetric_eigen();
    let tol = 1e-8 * e.eigenvalues.amax().max(1e-300);
    let keep: Vec<usize> = (0..n).filter(|&i| e.eigenvalues[i] <= tol).collect();
    if keep.len() == n {
        return None;
    }
    let mut u = DMatrix::<f64>::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        u.set_column(c, &e.eigenvectors.column(i));
    }
    Some(u)
}

/// Rewrites every objective/constraint coefficient matrix A on a reduced
/// block as UᵀAU and drops rows that the reduction makes vacuous (all
/// coefficients and rhs at rounding level — those rows were implied by the
/// face). Returns the reduced problem, the old-row → new-row map, and the
/// indices of rows dropped by the reduction itself.
pub fn reduce_sdp(
    sdp: &SdpProblem,
    faces: &[Option<DMatrix<f64>>],
) -> (SdpProblem, Vec<Option<usize>>, Vec<usize>) {
    let mut out = SdpProblem::new(Vec::new());
    out.maximize = sdp.maximize;
    out.obj_constant = sdp.obj_constant;
    for (bi, b) in sdp.blocks.iter().enumerate() {
        let size = faces
            .get(bi)
            .and_then(|f| f.as_ref())
            .map_or(b.size, |u| u.ncols());
        out.blocks.push(Block {
            size,
            kind: b.kind,
        });
    }
    let transform = |entries: &[Entry]| -> Vec<Entry> {
        let mut keepers: Vec<Entry> = Vec::new();
        let mut dense: HashMap<usize, DMatrix<f64>> = HashMap::new();
        for e in entries {
            match faces.get(e.block).and_then(|f| f.as_ref()) {
                Some(u) => {
                    let a = dense
                        .entry(e.block)
                        .or_insert_with(|| DMatrix::zeros(u.nrows(), u.nrows()));
                    a[(e.row, e.col)] += e.coeff;
                    if e.row != e.col {
                        a[(e.col, e.row)] += e.coeff;
                    }
                }
                None => keepers.push(*e),
            }
        }
        for (b, a) in dense {
            let u = faces[b].as_ref().unwrap();
            let at = u.transpose() * &a * u;
            let tol = 1e-12 * a.amax();
            for i in 0..at.nrows() {
                for j in i..at.ncols() {
                    let c = if i == j {
                        at[(i, i)]
                    } else {
                        0.5 * (at[(i, j)] + at[(j, i)])
                    };
                    if c.abs() > tol {
                        keepers.push(Entry::new(b, i, j, c));
                    }
                }
            }
        }
        keepers
    };
    out.objective = merge_entries(transform(&sdp.objective));
    let mut row_map = vec![None; sdp.constraints.len()];
    let mut dropped = Vec::new();
    for (k, c) in sdp.constraints.iter().enumerate() {
        let scale0 = c
            .entries
            .iter()
            .map(|e| e.coeff.abs())
            .fold(0.0f64, f64::max)
            .max(c.rhs.abs())
            .max(1e-300);
        let ents = transform(&c.entries);
        let mx = ents.iter().map(|e| e.coeff.abs()).fold(0.0f64, f64::max);
        if mx <= 1e-10 * scale0 && c.rhs.abs() <= 1e-10 * scale0 {
            dropped.push(k);
            continue;
        }
        row_map[k] = Some(out.constraints.len());
        out.add_constraint(crate::sdp::Constraint::new(
            ents,
            c.rhs,
            c.sense,
            c.label.clone(),
        ));
    }
    (out, row_map, dropped)
}

/// Solves an SDP restricted to the given faces and expands the solution
/// back to the original block shapes (X = U·X̃·Uᵀ, multipliers of reduced
/// rows set to zero).
pub fn solve_on_face(
    sdp: &SdpProblem,
    faces: &[Option<DMatrix<f64>>],
    opts: &SdpOptions,
) -> Result<SdpSolution, crate::sdp::SdpError> {
    if faces.iter().all(|f| f.is_none()) {
        return solve(sdp, opts);
    }
    let (red, row_map, face_dropped) = reduce_sdp(sdp, faces);
    let mut sol = solve(&red, opts)?;
    for (bi, f) in faces.iter().enumerate() {
        if let Some(u) = f {
            sol.block_values[bi] = u * &sol.block_values[bi] * u.transpose();
            sol.s_blocks[bi] = u * &sol.s_blocks[bi] * u.transpose();
        }
    }
    let mut old_of_new = vec![0usize; red.constraints.len()];
    for (old, new) in row_map.iter().enumerate() {
        if let Some(nk) = new {
            old_of_new[*nk] = old;
        }
    }
    let mut y = vec![0.0; sdp.constraints.len()];
    for (old, new) in row_map.iter().enumerate() {
        if let Some(nk) = new {
            y[old] = sol.y[*nk];
        }
    }
    let mut dropped = face_dropped;
    for &dk in &sol.dropped_rows {
        dropped.push(old_of_new[dk]);
    }
    dropped.sort_unstable();
    sol.y = y;
    sol.dropped_rows = dropped;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyprog::{Monomial, PolyProgram};
    use crate::relax::dense::build_lasserre;
    use crate::sdp::SdpStatus;

    /// min x² s.t. x² = 4 at r = 2: the moment matrix [1 x x²] annihilates
    /// coeffs(x² − 4) = (−4, 0, 1), so the face has dimension 2 and the
    /// reduced problem solves to 4 with a clean interior.
    #[test]
    fn univariate_equality_face() {
        let x = Polynomial::var(0);
        let pp = PolyProgram {
            objective: x.mul(&x),
            inequalities: vec![],
            equalities: vec![x.mul(&x).sub(&Polynomial::constant(4.0))],
            var_names: vec!["x".into()],
        };
        let rel = build_lasserre(&pp, 2).unwrap();
        let face = rel.faces[rel.moment_blocks[0].1].as_ref().expect("reduced");
        assert_eq!(face.nrows(), 3);
        assert_eq!(face.ncols(), 2);
        let sol = rel.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_obj - 4.0).abs() < 1e-5, "{}", sol.primal_obj);
        // Expanded moment matrix must satisfy the original entry layout:
        // y0 = 1, y2 = 4, y4 = 16.
        let m = |k: u32| {
            let mono = if k == 0 {
                Monomial::one()
            } else {
                (1..k).fold(Monomial::var(0), |a, _| a.mul(&Monomial::var(0)))
            };
            rel.moment(&sol.block_values, &mono).unwrap()
        };
        assert!((m(0) - 1.0).abs() < 1e-6);
        assert!((m(2) - 4.0).abs() < 1e-5);
        assert!((m(4) - 16.0).abs() < 1e-4);
    }
}
