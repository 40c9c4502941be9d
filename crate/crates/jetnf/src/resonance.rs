//! Exact sub-resonance classification of monomial slots.
//!
//! A slot in component block k with per-block degrees n has eigen-exponent
//! `E(k,n) = -χ_k + Σ_j n_j χ_j` under conjugation by the model linear map
//! L_χ. Slots with E >= 0 are PLUS (sub-resonant, finitely many), slots
//! with E < 0 are MINUS (contracted). Exponents are exact [`LogValue`]s,
//! so the boundary E = 0 is decided symbolically, never by floats.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::jet::{BlockStructure, JetMap, MonomialSlot, TruncationOrder};
use crate::logs::LogValue;
use crate::scalar::{Coeff, Rational};

/// Lyapunov exponent data: χ_1 < … < χ_m with the first `m_s` negative,
/// and the band half-width ε.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    chi: Vec<LogValue>,
    m_s: usize,
    epsilon: Rational,
}

impl SpectralData {
    pub fn new(chi: Vec<LogValue>, m_s: usize, epsilon: Rational) -> Result<Self> {
        if chi.is_empty() {
            return Err(Error::InvalidInput("empty exponent list".into()));
        }
        if m_s == 0 || m_s > chi.len() {
            return Err(Error::InvalidInput(format!(
                "m_s = {m_s} outside 1..={}",
                chi.len()
            )));
        }
        for w in chi.windows(2) {
            if w[0].cmp_value(&w[1]) != Ordering::Less {
                return Err(Error::InvalidInput(
                    "exponents must be strictly increasing".into(),
                ));
            }
        }
        if chi[m_s - 1].sign() != Ordering::Less {
            return Err(Error::InvalidInput(format!(
                "chi_{m_s} must be negative"
            )));
        }
        if m_s < chi.len() && chi[m_s].sign() == Ordering::Less {
            return Err(Error::InvalidInput(format!(
                "chi_{} must be nonnegative",
                m_s + 1
            )));
        }
        if epsilon < Rational::from_int(0) {
            return Err(Error::InvalidInput("epsilon must be nonnegative".into()));
        }
        Ok(SpectralData { chi, m_s, epsilon })
    }

    pub fn m(&self) -> usize {
        self.chi.len()
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    /// χ_k, 0-based.
    pub fn chi(&self, k: usize) -> &LogValue {
        &self.chi[k]
    }

    pub fn chis(&self) -> &[LogValue] {
        &self.chi
    }

    pub fn epsilon(&self) -> &Rational {
        &self.epsilon
    }

    /// |χ_{m_s}|, the distance of the slowest stable exponent from zero.
    pub fn stable_gap(&self) -> LogValue {
        self.chi[self.m_s - 1].neg()
    }

    /// e^{χ_k} when it is rational (integer coefficients over prime logs).
    pub fn band_center_rational(&self, k: usize) -> Option<Rational> {
        self.chi[k].exp_as_rational()
    }

    pub fn band_center_f64(&self, k: usize) -> f64 {
        self.chi[k].to_f64().exp()
    }

    /// The model map L_χ = diag(e^{χ_k}) as a matrix over S; `None` when
    /// some band center is irrational.
    pub fn lchi_matrix<S: Coeff>(&self, blocks: &BlockStructure) -> Option<crate::matrix::Matrix<S>> {
        let mut entries = Vec::with_capacity(blocks.d());
        for k in 0..blocks.m() {
            let c = self.band_center_rational(k)?;
            for _ in blocks.block_range(k) {
                entries.push(S::from_rational(&c));
            }
        }
        Some(crate::matrix::Matrix::diagonal(&entries))
    }

    /// Consistency with a block structure: one exponent per block.
    pub fn check_blocks(&self, blocks: &BlockStructure) -> Result<()> {
        if blocks.m() != self.m() || blocks.m_s() != self.m_s {
            return Err(Error::ShapeMismatch(format!(
                "spectral data has m = {}, m_s = {}, blocks have m = {}, m_s = {}",
                self.m(),
                self.m_s,
                blocks.m(),
                blocks.m_s()
            )));
        }
        Ok(())
    }
}

/// Eigen-exponent `E(k, n) = -χ_k + Σ_j n_j χ_j` (k 0-based).
pub fn exponent(k: usize, block_degrees: &[u32], spectral: &SpectralData) -> Result<LogValue> {
    if k >= spectral.m() {
        return Err(Error::IndexOutOfRange(format!(
            "block {} of {}",
            k + 1,
            spectral.m()
        )));
    }
    if block_degrees.len() != spectral.m() {
        return Err(Error::IndexOutOfRange(format!(
            "degree vector of length {} for m = {}",
            block_degrees.len(),
            spectral.m()
        )));
    }
    let mut e = spectral.chi(k).neg();
    for (j, &nj) in block_degrees.iter().enumerate() {
        if nj > 0 {
            e = e.add(&spectral.chi(j).scale_int(nj as i64));
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotClass {
    Plus,
    Minus,
}

/// PLUS iff E(k, n) >= 0 (resonant slots with E = 0 included, following
/// the λ >= 1 convention).
pub fn classify_block_degrees(
    k: usize,
    block_degrees: &[u32],
    spectral: &SpectralData,
    ell: usize,
) -> Result<SlotClass> {
    let total: u32 = block_degrees.iter().sum();
    if total < 2 {
        return Err(Error::DegreeViolation(format!(
            "total degree {total} below 2"
        )));
    }
    let ydeg: u32 = block_degrees[spectral.m_s()..].iter().sum();
    if ydeg as usize > ell {
        return Err(Error::DegreeViolation(format!(
            "y-degree {ydeg} above ell = {ell}"
        )));
    }
    let e = exponent(k, block_degrees, spectral)?;
    Ok(if e.is_nonnegative() {
        SlotClass::Plus
    } else {
        SlotClass::Minus
    })
}

/// The finite PLUS basis plus classification services for one spectral
/// datum, block structure and y-order.
#[derive(Debug)]
pub struct ResonanceTable {
    spectral: SpectralData,
    blocks: BlockStructure,
    ell: usize,
    plus_basis: Vec<MonomialSlot>,
    resonant: Vec<MonomialSlot>,
    r_min: usize,
    x_cutoff: usize,
    cache: RwLock<HashMap<(usize, Vec<u32>), SlotClass>>,
}

impl Clone for ResonanceTable {
    fn clone(&self) -> Self {
        ResonanceTable {
            spectral: self.spectral.clone(),
            blocks: self.blocks.clone(),
            ell: self.ell,
            plus_basis: self.plus_basis.clone(),
            resonant: self.resonant.clone(),
            r_min: self.r_min,
            x_cutoff: self.x_cutoff,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl PartialEq for ResonanceTable {
    fn eq(&self, other: &Self) -> bool {
        self.spectral == other.spectral && self.blocks == other.blocks && self.ell == other.ell
    }
}

impl ResonanceTable {
    /// Enumerates the complete PLUS basis. Termination: a slot with
    /// x-degree s has `E <= |χ_1| + ℓ·max(χ_m, 0) - s·|χ_{m_s}|`, so PLUS
    /// slots stop at a computable cutoff (taken conservatively, one past
    /// the spec bound `(2|χ_1| + ℓ·max(χ_m,0)) / |χ_{m_s}|`).
    pub fn enumerate(
        spectral: SpectralData,
        blocks: BlockStructure,
        ell: usize,
    ) -> Result<Self> {
        spectral.check_blocks(&blocks)?;
        let x_cutoff = plus_x_cutoff(&spectral, ell);
        let mut plus_basis = Vec::new();
        let mut resonant = Vec::new();
        for slot in enumerate_slots(&blocks, ell, x_cutoff) {
            let k = blocks.var_block(slot.component());
            let n = blocks.block_degrees(slot.exponents());
            let e = exponent(k, &n, &spectral)?;
            match e.sign() {
                Ordering::Greater => plus_basis.push(slot),
                Ordering::Equal => {
                    plus_basis.push(slot.clone());
                    resonant.push(slot);
                }
                Ordering::Less => {}
            }
        }
        plus_basis.sort();
        resonant.sort();
        let r_min = plus_basis
            .iter()
            .map(|s| blocks.x_degree(s.exponents()) as usize)
            .max()
            .unwrap_or(0);
        Ok(ResonanceTable {
            spectral,
            blocks,
            ell,
            plus_basis,
            resonant,
            r_min,
            x_cutoff,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn plus_basis(&self) -> &[MonomialSlot] {
        &self.plus_basis
    }

    pub fn resonant_slots(&self) -> &[MonomialSlot] {
        &self.resonant
    }

    /// Max x-degree over the PLUS basis.
    pub fn r_min(&self) -> usize {
        self.r_min
    }

    pub fn x_cutoff(&self) -> usize {
        self.x_cutoff
    }

    /// Max total degree over the PLUS basis; truncation at or above this
    /// keeps every sub-resonance slot representable.
    pub fn max_plus_total_degree(&self) -> usize {
        self.plus_basis
            .iter()
            .map(|s| s.total_degree() as usize)
            .max()
            .unwrap_or(2)
    }

    pub fn is_lossless_at(&self, trunc: &TruncationOrder) -> bool {
        trunc.max_degree() >= self.max_plus_total_degree() && trunc.ell() >= self.ell
    }

    /// Same classification data (spectral, blocks, ell)?
    pub fn same_table(&self, other: &Self) -> bool {
        self == other
    }

    /// Memoized class of (block k, per-block degrees n).
    pub fn classify(&self, k: usize, block_degrees: &[u32]) -> Result<SlotClass> {
        let key = (k, block_degrees.to_vec());
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return Ok(*hit);
        }
        let class = classify_block_degrees(k, block_degrees, &self.spectral, self.ell)?;
        self.cache.write().unwrap().insert(key, class);
        Ok(class)
    }

    pub fn classify_slot(&self, slot: &MonomialSlot) -> Result<SlotClass> {
        let k = self.blocks.var_block(slot.component());
        let n = self.blocks.block_degrees(slot.exponents());
        self.classify(k, &n)
    }

    /// Slot-diagonal projection onto one class; PLUS and MINUS parts sum
    /// back to the input.
    pub fn project<S: Coeff>(&self, a: &JetMap<S>, side: SlotClass) -> Result<JetMap<S>> {
        if !a.has_zero_linear() {
            return Err(Error::LinearPartPresent);
        }
        let mut kept = Vec::new();
        for (slot, c) in a.coeffs() {
            if self.classify_slot(slot)? == side {
                kept.push((slot.clone(), c.clone()));
            }
        }
        JetMap::offset(a.blocks().clone(), *a.trunc(), kept)
    }

    /// Max over MINUS classes within the truncation region of
    /// `exp(E + ε(1 + Σn))`: the worst per-step contraction factor the
    /// band condition still guarantees.
    pub fn rho_bound(&self, trunc: &TruncationOrder) -> f64 {
        let mut best: f64 = 0.0;
        for (k, n) in enumerate_classes(&self.blocks, self.ell.min(trunc.ell()), trunc.max_degree())
        {
            let total: u32 = n.iter().sum();
            if (total as usize) > trunc.max_degree() {
                continue;
            }
            let e = exponent(k, &n, &self.spectral).expect("class within range");
            if e.sign() == Ordering::Less {
                let budget = self.spectral.epsilon().clone()
                    * Rational::from_int(1 + total as i64);
                let shifted = e.add(&LogValue::from_rational(budget));
                best = best.max(shifted.to_f64().exp());
            }
        }
        best
    }
}

/// Robustness margin of the classification under ε-perturbations of the
/// exponents (the strict-sign equivalence of the band remark).
#[derive(Debug, Clone)]
pub struct MarginReport {
    /// min over non-resonant slot classes of |E| / (1 + Σn).
    pub eps_max: LogValue,
    /// Slots with E exactly 0; no ε > 0 preserves strict signs there.
    pub resonant: Vec<MonomialSlot>,
    /// ε <= eps_max and no resonant slots.
    pub ok: bool,
    /// Largest x-degree scanned before the tail bound took over.
    pub scanned_x_degree: usize,
}

/// Scans the finite set of classes where a sign flip is possible and
/// returns the exact flip margin. Requires ε < |χ_{m_s}|; beyond the
/// scanned x-degree the per-degree drift `ε(1+Σn)` loses to the stable
/// contraction and no flip can occur.
pub fn validate_margin(
    spectral: &SpectralData,
    blocks: &BlockStructure,
    ell: usize,
) -> Result<MarginReport> {
    spectral.check_blocks(blocks)?;
    let gap = spectral.stable_gap();
    let eps = LogValue::from_rational(spectral.epsilon().clone());
    if eps.cmp_value(&gap) != Ordering::Less {
        return Err(Error::EpsilonTooLarge(format!(
            "epsilon {} >= |chi_{}| = {}",
            spectral.epsilon(),
            spectral.m_s(),
            gap
        )));
    }

    // |χ_1| + ℓ·max(χ_m, 0), the non-stable budget of E
    let chi_max = spectral.chi(spectral.m() - 1);
    let mut budget = spectral.chi(0).neg();
    if chi_max.sign() == Ordering::Greater && ell > 0 {
        budget = budget.add(&chi_max.scale_int(ell as i64));
    }

    let plus_cutoff = plus_x_cutoff(spectral, ell);
    let mut min_ratio: Option<LogValue> = None;
    let mut resonant_classes: Vec<(usize, Vec<u32>)> = Vec::new();
    let mut s = 0usize;
    loop {
        for (k, n) in x_layer_classes(blocks, ell, s) {
            let total: i64 = n.iter().map(|&v| v as i64).sum();
            let e = exponent(k, &n, spectral)?;
            if e.is_zero() {
                resonant_classes.push((k, n));
                continue;
            }
            let ratio = e.abs().scale(&Rational::new(1.into(), (1 + total).into()));
            let lower = match &min_ratio {
                Some(m) => ratio.cmp_value(m) == Ordering::Less,
                None => true,
            };
            if lower {
                min_ratio = Some(ratio);
            }
        }
        // tail bound: for x-degree s' > s every class has E < 0 with
        // |E|/(1+Σn) >= ((s'·gap - budget)) / (1 + s' + ℓ), increasing in s'
        if s >= plus_cutoff {
            if let Some(m) = &min_ratio {
                let s1 = (s + 1) as i64;
                let lhs = gap.scale_int(s1).sub(&budget);
                let rhs = m.scale_int(1 + s1 + ell as i64);
                if lhs.cmp_value(&rhs) != Ordering::Less {
                    break;
                }
            }
        }
        s += 1;
        assert!(s < 10_000, "margin scan failed to terminate");
    }

    let mut resonant = Vec::new();
    for (k, n) in resonant_classes {
        resonant.extend(expand_class_to_slots(blocks, k, &n, ell));
    }
    resonant.sort();
    let eps_max = min_ratio.expect("at least one non-resonant class exists");
    let ok = resonant.is_empty() && eps.cmp_value(&eps_max) != Ordering::Greater;
    Ok(MarginReport {
        eps_max,
        resonant,
        ok,
        scanned_x_degree: s,
    })
}

/// Conservative x-degree cutoff for PLUS slots:
/// one past `ceil((2|χ_1| + ℓ·max(χ_m,0)) / |χ_{m_s}|)`.
fn plus_x_cutoff(spectral: &SpectralData, ell: usize) -> usize {
    let gap = spectral.stable_gap();
    let chi_max = spectral.chi(spectral.m() - 1);
    let mut numer = spectral.chi(0).neg().scale_int(2);
    if chi_max.sign() == Ordering::Greater && ell > 0 {
        numer = numer.add(&chi_max.scale_int(ell as i64));
    }
    let mut b = 0usize;
    while numer.cmp_value(&gap.scale_int(b as i64)) == Ordering::Greater {
        b += 1;
        assert!(b < 10_000, "cutoff search failed to terminate");
    }
    b + 1
}

/// All valid slots with x-degree <= x_max and y-degree <= ell.
pub fn enumerate_slots(
    blocks: &BlockStructure,
    ell: usize,
    x_max: usize,
) -> Vec<MonomialSlot> {
    let ds = blocks.stable_dim();
    let dy = blocks.d() - ds;
    let x_parts = bounded_vectors(ds, x_max);
    let y_parts = bounded_vectors(dy, ell);
    let mut out = Vec::new();
    for comp in 0..blocks.d() {
        let transversal = blocks.is_transversal_block(blocks.var_block(comp));
        for xp in &x_parts {
            for yp in &y_parts {
                let ydeg: u32 = yp.iter().sum();
                if transversal && ydeg == 0 {
                    continue;
                }
                let total: u32 = xp.iter().sum::<u32>() + ydeg;
                if total < 2 {
                    continue;
                }
                let mut alpha = xp.clone();
                alpha.extend_from_slice(yp);
                out.push(MonomialSlot::new(comp, alpha));
            }
        }
    }
    out
}

/// All (block k, per-block degrees) classes within the given bounds
/// (total <= max_total, y-part <= ell, total >= 2, transversal components
/// require y-degree >= 1).
fn enumerate_classes(
    blocks: &BlockStructure,
    ell: usize,
    max_total: usize,
) -> Vec<(usize, Vec<u32>)> {
    let ms = blocks.m_s();
    let my = blocks.m() - ms;
    let mut out = Vec::new();
    for xs in bounded_vectors(ms, max_total) {
        for ys in bounded_vectors(my, ell) {
            let total: u32 = xs.iter().sum::<u32>() + ys.iter().sum::<u32>();
            if total < 2 || total as usize > max_total {
                continue;
            }
            let ydeg: u32 = ys.iter().sum();
            let mut n = xs.clone();
            n.extend_from_slice(&ys);
            for k in 0..blocks.m() {
                if k >= ms && ydeg == 0 {
                    continue;
                }
                out.push((k, n.clone()));
            }
        }
    }
    out
}

/// Classes with x-degree exactly `s`.
fn x_layer_classes(
    blocks: &BlockStructure,
    ell: usize,
    s: usize,
) -> Vec<(usize, Vec<u32>)> {
    let ms = blocks.m_s();
    let my = blocks.m() - ms;
    let mut out = Vec::new();
    for xs in fixed_sum_vectors(ms, s as u32) {
        for ys in bounded_vectors(my, ell) {
            let ydeg: u32 = ys.iter().sum();
            let total = s as u32 + ydeg;
            if total < 2 {
                continue;
            }
            let mut n = xs.clone();
            n.extend_from_slice(&ys);
            for k in 0..blocks.m() {
                if k >= ms && ydeg == 0 {
                    continue;
                }
                out.push((k, n.clone()));
            }
        }
    }
    out
}

/// All slots whose per-block degrees equal `n`, in components of block k.
fn expand_class_to_slots(
    blocks: &BlockStructure,
    k: usize,
    n: &[u32],
    ell: usize,
) -> Vec<MonomialSlot> {
    // distribute each block's degree over its variables
    let mut per_block: Vec<Vec<Vec<u32>>> = Vec::new();
    for (j, &nj) in n.iter().enumerate() {
        per_block.push(fixed_sum_vectors(blocks.dims()[j], nj));
    }
    let mut alphas: Vec<Vec<u32>> = vec![Vec::new()];
    for options in &per_block {
        let mut next = Vec::new();
        for prefix in &alphas {
            for opt in options {
                let mut a = prefix.clone();
                a.extend_from_slice(opt);
                next.push(a);
            }
        }
        alphas = next;
    }
    let ydeg: u32 = n[blocks.m_s()..].iter().sum();
    let mut out = Vec::new();
    for comp in blocks.block_range(k) {
        if blocks.is_transversal_block(k) && ydeg == 0 {
            continue;
        }
        for a in &alphas {
            if blocks.y_degree(a) as usize > ell {
                continue;
            }
            out.push(MonomialSlot::new(comp, a.clone()));
        }
    }
    out
}

/// Nonnegative integer vectors of the given length with sum <= bound.
fn bounded_vectors(len: usize, bound: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; len];
    fn rec(cur: &mut Vec<u32>, idx: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if idx == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[idx] = v;
            rec(cur, idx + 1, left - v, out);
        }
        cur[idx] = 0;
    }
    if len == 0 {
        if bound == 0 || true {
            out.push(Vec::new());
        }
        return out;
    }
    rec(&mut cur, 0, bound as u32, &mut out);
    out
}

/// Nonnegative integer vectors of the given length with sum == target.
fn fixed_sum_vectors(len: usize, target: u32) -> Vec<Vec<u32>> {
    if len == 0 {
        return if target == 0 {
            vec![Vec::new()]
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; len];
    fn rec(cur: &mut Vec<u32>, idx: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if idx == cur.len() - 1 {
            cur[idx] = left;
            out.push(cur.clone());
            cur[idx] = 0;
            return;
        }
        for v in 0..=left {
            cur[idx] = v;
            rec(cur, idx + 1, left - v, out);
        }
        cur[idx] = 0;
    }
    rec(&mut cur, 0, target, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn rat(n: i64, d: i64) -> Rational {
        Coeff::ratio(n, d)
    }

    fn ln(n: i64) -> LogValue {
        LogValue::ln_of(&rat(n, 1)).unwrap()
    }

    /// χ = (-log2, log2), m_s = 1 (saddle)
    pub(crate) fn spec_a() -> SpectralData {
        SpectralData::new(vec![ln(2).neg(), ln(2)], 1, rat(1, 10)).unwrap()
    }

    /// χ = (-2 log2, -log2), m_s = 2 (resonant contraction)
    pub(crate) fn spec_b() -> SpectralData {
        SpectralData::new(vec![ln(2).scale_int(-2), ln(2).neg()], 2, rat(1, 10)).unwrap()
    }

    /// χ = (-log3, log2), m_s = 1 (incommensurable)
    pub(crate) fn spec_c() -> SpectralData {
        SpectralData::new(vec![ln(3).neg(), ln(2)], 1, rat(1, 10)).unwrap()
    }

    fn blocks11(m_s: usize) -> BlockStructure {
        BlockStructure::new(vec![1, 1], m_s).unwrap()
    }

    fn slot(comp: usize, alpha: &[u32]) -> MonomialSlot {
        MonomialSlot::new(comp, alpha.to_vec())
    }

    #[test]
    fn spectral_validation() {
        assert!(SpectralData::new(vec![ln(2), ln(2).neg()], 1, rat(0, 1)).is_err());
        assert!(SpectralData::new(vec![ln(2).neg(), ln(2)], 2, rat(0, 1)).is_err());
        assert!(SpectralData::new(vec![ln(2).neg()], 1, rat(-1, 1)).is_err());
        assert!(SpectralData::new(vec![ln(2).neg(), ln(3).neg()], 2, rat(0, 1)).is_err());
        assert!(SpectralData::new(vec![ln(3).neg(), ln(2).neg()], 2, rat(0, 1)).is_ok());
    }

    #[test]
    fn exponent_formula() {
        // SPEC-A, k = 1, n = (0, 2): E = 3 log2 units, eigenvalue 8
        let e = exponent(0, &[0, 2], &spec_a()).unwrap();
        assert_eq!(e, ln(2).scale_int(3));
        assert_eq!(e.exp_as_rational().unwrap(), rat(8, 1));
        // linear slot of its own block
        for k in 0..2 {
            let mut n = vec![0, 0];
            n[k] = 1;
            assert!(exponent(k, &n, &spec_a()).unwrap().is_zero());
        }
        // SPEC-B classical resonance
        assert!(exponent(0, &[0, 2], &spec_b()).unwrap().is_zero());
        assert!(matches!(
            exponent(5, &[0, 0], &spec_a()),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_block_degrees(0, &[2, 0], &spec_a(), 2).unwrap(),
            SlotClass::Minus
        );
        assert_eq!(
            classify_block_degrees(0, &[0, 2], &spec_a(), 2).unwrap(),
            SlotClass::Plus
        );
        assert_eq!(
            classify_block_degrees(0, &[0, 2], &spec_b(), 0).unwrap(),
            SlotClass::Plus
        );
        assert!(matches!(
            classify_block_degrees(0, &[1, 0], &spec_a(), 2),
            Err(Error::DegreeViolation(_))
        ));
        assert!(matches!(
            classify_block_degrees(0, &[0, 3], &spec_a(), 2),
            Err(Error::DegreeViolation(_))
        ));
    }

    #[test]
    fn plus_basis_saddle() {
        let table = ResonanceTable::enumerate(spec_a(), blocks11(1), 2).unwrap();
        let expected: Vec<MonomialSlot> = vec![
            slot(0, &[1, 1]),
            slot(0, &[2, 1]),
            slot(0, &[0, 2]),
            slot(0, &[1, 2]),
            slot(0, &[2, 2]),
            slot(0, &[3, 2]),
            slot(1, &[0, 2]),
            slot(1, &[1, 2]),
        ];
        let mut expected = expected;
        expected.sort();
        assert_eq!(table.plus_basis(), &expected[..]);
        assert_eq!(table.r_min(), 3);
        let mut resonant = vec![slot(0, &[2, 1]), slot(0, &[3, 2]), slot(1, &[1, 2])];
        resonant.sort();
        assert_eq!(table.resonant_slots(), &resonant[..]);
        assert_eq!(table.max_plus_total_degree(), 5);
    }

    #[test]
    fn plus_basis_poincare_dulac() {
        let table = ResonanceTable::enumerate(spec_b(), blocks11(2), 0).unwrap();
        assert_eq!(table.plus_basis(), &[slot(0, &[0, 2])][..]);
        assert_eq!(table.resonant_slots(), &[slot(0, &[0, 2])][..]);
        assert_eq!(table.r_min(), 2);
    }

    #[test]
    fn plus_basis_pure_stable_line_is_empty() {
        let spectral = SpectralData::new(vec![ln(2).neg()], 1, rat(0, 1)).unwrap();
        let blocks = BlockStructure::new(vec![1], 1).unwrap();
        let table = ResonanceTable::enumerate(spectral, blocks, 0).unwrap();
        assert!(table.plus_basis().is_empty());
        assert_eq!(table.r_min(), 0);
    }

    #[test]
    fn projection_splits_plus_and_minus() {
        let table = ResonanceTable::enumerate(spec_a(), blocks11(1), 2).unwrap();
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let a = JetMap::offset(
            blocks11(1),
            trunc,
            vec![
                (slot(0, &[2, 0]), rat(1, 1)),
                (slot(0, &[0, 2]), rat(1, 1)),
            ],
        )
        .unwrap();
        let plus = table.project(&a, SlotClass::Plus).unwrap();
        let minus = table.project(&a, SlotClass::Minus).unwrap();
        assert_eq!(plus.coeff(&slot(0, &[0, 2])), rat(1, 1));
        assert_eq!(plus.nonlinear_slot_count(), 1);
        assert_eq!(minus.coeff(&slot(0, &[2, 0])), rat(1, 1));
        assert_eq!(minus.nonlinear_slot_count(), 1);
        assert_eq!(plus.add(&minus).unwrap(), a);

        let with_linear = JetMap::identity(blocks11(1), trunc);
        assert!(matches!(
            table.project(&with_linear, SlotClass::Plus),
            Err(Error::LinearPartPresent)
        ));
    }

    #[test]
    fn projection_spec_b_example() {
        let table = ResonanceTable::enumerate(spec_b(), blocks11(2), 0).unwrap();
        let trunc = TruncationOrder::new(0, 2).unwrap();
        let a = JetMap::offset(
            blocks11(2),
            trunc,
            vec![
                (slot(0, &[1, 1]), rat(1, 1)),
                (slot(0, &[0, 2]), rat(1, 1)),
            ],
        )
        .unwrap();
        let plus = table.project(&a, SlotClass::Plus).unwrap();
        let minus = table.project(&a, SlotClass::Minus).unwrap();
        assert_eq!(plus.coeff(&slot(0, &[0, 2])), rat(1, 1));
        assert_eq!(minus.coeff(&slot(0, &[1, 1])), rat(1, 1));
    }

    #[test]
    fn margin_saddle_reports_resonant_slots() {
        let report = validate_margin(&spec_a(), &blocks11(1), 2).unwrap();
        let mut expected = vec![slot(0, &[2, 1]), slot(0, &[3, 2]), slot(1, &[1, 2])];
        expected.sort();
        assert_eq!(report.resonant, expected);
        assert!(!report.ok);
        // minimum ratio |E|/(1+Σn) is attained at component 1, n = (4,2)
        assert_eq!(
            report.eps_max,
            ln(2).scale(&rat(1, 7))
        );
    }

    #[test]
    fn margin_poincare_dulac() {
        let report = validate_margin(&spec_b(), &blocks11(2), 0).unwrap();
        assert_eq!(report.resonant, vec![slot(0, &[0, 2])]);
        assert!(!report.ok);
    }

    #[test]
    fn margin_incommensurable_is_clean() {
        let report = validate_margin(&spec_c(), &blocks11(1), 1).unwrap();
        assert!(report.resonant.is_empty());
        assert_eq!(report.eps_max.sign(), Ordering::Greater);
        // attained at component 1, n = (2,1): |ln2 - ln3| / 4
        assert_eq!(report.eps_max, ln(3).sub(&ln(2)).scale(&rat(1, 4)));
        // epsilon = 1/10 <= eps_max ≈ 0.1014
        assert!(report.ok);
    }

    #[test]
    fn margin_rejects_wide_band() {
        let spectral = SpectralData::new(vec![ln(2).neg(), ln(2)], 1, rat(1, 1)).unwrap();
        assert!(matches!(
            validate_margin(&spectral, &blocks11(1), 2),
            Err(Error::EpsilonTooLarge(_))
        ));
    }

    #[test]
    fn lchi_matrix_for_rational_centers() {
        let m: Matrix<Rational> = spec_a().lchi_matrix(&blocks11(1)).unwrap();
        assert_eq!(*m.get(0, 0), rat(1, 2));
        assert_eq!(*m.get(1, 1), rat(2, 1));
    }
}
