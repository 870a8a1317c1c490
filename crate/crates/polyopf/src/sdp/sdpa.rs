//! SDPA sparse format (`.dat-s`) interop.
//!
//! The format encodes the pair
//!
//! ```text
//!   (P) min  cᵀx   s.t.  X = Σ_k x_k F_k − F0 ⪰ 0
//!   (D) max  ⟨F0,Y⟩  s.t.  ⟨F_k,Y⟩ = c_k,  Y ⪰ 0
//! ```
//!
//! An [`SdpProblem`] `min ⟨C,Y⟩ s.t. ⟨A_k,Y⟩ {=,≥} b_k` is written as the (D)
//! side with `F0 = −C`, `F_k = A_k`, `c_k = b_k`; `≥` rows get a diagonal
//! slack block and free scalars are split `u = u⁺ − u⁻` into two diagonal
//! blocks (the format has no free cone). Coefficients are printed with 17
//! significant digits so a re-read is bit-exact.

use std::fmt::Write as _;

use thiserror::Error;

use super::problem::{Block, BlockKind, Constraint, Entry, SdpProblem, Sense};

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("line {0}: {1}")]
    Parse(usize, String),
    #[error("unexpected end of file")]
    Eof,
}

/// Serializes to SDPA sparse text. The written problem's (D)-side optimal
/// value equals the input problem's optimal value (negated when the input
/// maximizes, since the export always minimizes ⟨C,Y⟩).
pub fn write_sdpa(p: &SdpProblem) -> String {
    let sign = if p.maximize { -1.0 } else { 1.0 };
    // Layout: original PSD blocks keep their index order; free blocks are
    // replaced by a (−2s)-sized diagonal block (u⁺ then u⁻); one trailing
    // diagonal block collects all ≥-row slacks.
    let mut block_struct: Vec<i64> = Vec::new();
    let mut map: Vec<usize> = Vec::new(); // original block -> exported block (0-based)
    for b in &p.blocks {
        map.push(block_struct.len());
        match b.kind {
            BlockKind::Psd => block_struct.push(b.size as i64),
            BlockKind::FreeDiag => block_struct.push(-(2 * b.size as i64)),
        }
    }
    let n_ge = p
        .constraints
        .iter()
        .filter(|c| c.sense == Sense::Ge)
        .count();
    let slack_block = if n_ge > 0 {
        block_struct.push(-(n_ge as i64));
        Some(block_struct.len() - 1)
    } else {
        None
    };

    let mut out = String::new();
    let _ = writeln!(out, "{}", p.constraints.len());
    let _ = writeln!(out, "{}", block_struct.len());
    let _ = writeln!(
        out,
        "{}",
        block_struct
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(
        out,
        "{}",
        p.constraints
            .iter()
            .map(|c| format!("{:.16e}", c.rhs))
            .collect::<Vec<_>>()
            .join(" ")
    );
    let emit = |mat: usize, e: &Entry, scale: f64, out: &mut String| {
        let eb = map[e.block];
        match p.blocks[e.block].kind {
            BlockKind::Psd => {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {:.16e}",
                    mat,
                    eb + 1,
                    e.row + 1,
                    e.col + 1,
                    scale * e.coeff
                );
            }
            BlockKind::FreeDiag => {
                let s = p.blocks[e.block].size;
                let _ = writeln!(
                    out,
                    "{} {} {} {} {:.16e}",
                    mat,
                    eb + 1,
                    e.row + 1,
                    e.row + 1,
                    scale * e.coeff
                );
                let _ = writeln!(
                    out,
                    "{} {} {} {} {:.16e}",
                    mat,
                    eb + 1,
                    s + e.row + 1,
                    s + e.row + 1,
                    -scale * e.coeff
                );
            }
        }
    };
    // F0 = −C (so that max ⟨F0,Y⟩ = −min ⟨C,Y⟩ … the (D) value is the
    // negated minimum; we keep C's sign and let readers negate, documented).
    for e in &p.objective {
        emit(0, e, -sign, &mut out);
    }
    for (k, c) in p.constraints.iter().enumerate() {
        for e in &c.entries {
            emit(k + 1, e, 1.0, &mut out);
        }
        if c.sense == Sense::Ge {
            let slot = p.constraints[..k].iter().filter(|c| c.sense == Sense::Ge).count();
            let _ = writeln!(
                out,
                "{} {} {} {} {:.16e}",
                k + 1,
                slack_block.unwrap() + 1,
                slot + 1,
                slot + 1,
                -1.0f64
            );
        }
    }
    out
}

/// Reads SDPA sparse text into the (D)-side problem
/// `max ⟨F0,Y⟩ s.t. ⟨F_k,Y⟩ = c_k, Y ⪰ 0` (diagonal blocks stay PSD).
pub fn read_sdpa(text: &str) -> Result<SdpProblem, SdpaError> {
    fn parse_nums(ln: usize, s: &str) -> Result<Vec<f64>, SdpaError> {
        s.split(|c: char| {
            c.is_whitespace() || matches!(c, ',' | '(' | ')' | '{' | '}')
        })
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| SdpaError::Parse(ln, format!("bad number {t:?}")))
        })
        .collect()
    }

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split(['*', '"']).next().unwrap_or("").trim()))
        .filter(|&(_, l)| !l.is_empty());
    let (ln, l) = lines.next().ok_or(SdpaError::Eof)?;
    let m = parse_nums(ln, l)?
        .first()
        .copied()
        .ok_or(SdpaError::Parse(ln, "missing m".into()))? as usize;
    let (ln, l) = lines.next().ok_or(SdpaError::Eof)?;
    let nblocks = parse_nums(ln, l)?
        .first()
        .copied()
        .ok_or(SdpaError::Parse(ln, "missing nblocks".into()))? as usize;
    let (ln, l) = lines.next().ok_or(SdpaError::Eof)?;
    let sizes = parse_nums(ln, l)?;
    if sizes.len() != nblocks {
        return Err(SdpaError::Parse(ln, "block structure length mismatch".into()));
    }
    let blocks: Vec<Block> = sizes
        .iter()
        .map(|&s| Block {
            size: s.abs() as usize,
            kind: BlockKind::Psd,
        })
        .collect();
    let diagonal: Vec<bool> = sizes.iter().map(|&s| s < 0.0).collect();
    let (ln, l) = lines.next().ok_or(SdpaError::Eof)?;
    let rhs = parse_nums(ln, l)?;
    if rhs.len() != m {
        return Err(SdpaError::Parse(ln, "rhs length mismatch".into()));
    }

    let mut p = SdpProblem::new(blocks);
    p.maximize = true;
    let mut cons_entries: Vec<Vec<Entry>> = vec![Vec::new(); m];
    for (ln, l) in lines {
        let v = parse_nums(ln, l)?;
        if v.len() != 5 {
            return Err(SdpaError::Parse(ln, "expected 5 fields".into()));
        }
        let (mat, blk, i, j, val) =
            (v[0] as usize, v[1] as usize - 1, v[2] as usize - 1, v[3] as usize - 1, v[4]);
        if blk >= p.blocks.len() || i >= p.blocks[blk].size || j >= p.blocks[blk].size {
            return Err(SdpaError::Parse(ln, "entry out of range".into()));
        }
        if diagonal[blk] && i != j {
            return Err(SdpaError::Parse(ln, "off-diagonal in diagonal block".into()));
        }
        let e = Entry::new(blk, i, j, val);
        if mat == 0 {
            p.objective.push(e);
        } else if mat <= m {
            cons_entries[mat - 1].push(e);
        } else {
            return Err(SdpaError::Parse(ln, "matrix index out of range".into()));
        }
    }
    for (k, entries) in cons_entries.into_iter().enumerate() {
        p.add_constraint(Constraint::new(entries, rhs[k], Sense::Eq, format!("sdpa row {k}")));
    }
    Ok(p)
}
