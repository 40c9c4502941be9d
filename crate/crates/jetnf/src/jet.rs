//! Truncated polynomial jet maps of R^d fixing the origin.
//!
//! A [`JetMap`] is a linear part plus a sparse table of nonlinear monomial
//! coefficients, truncated to total degree <= D and transversal (y) degree
//! <= ell. Coordinates split into stable blocks (x) and transversal blocks
//! (y); transversal components carry no pure-x monomials and the linear
//! part maps the stable subspace into itself. Under those invariants the
//! truncation region is a congruence for composition: truncating inputs
//! first and composing never changes the retained coefficients, which is
//! what makes the exact identities downstream possible.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Coeff;

/// Decomposition of R^d into ordered blocks, the first `m_s` stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    dims: Vec<usize>,
    m_s: usize,
    var_block: Vec<usize>,
    stable_dim: usize,
}

impl BlockStructure {
    pub fn new(dims: Vec<usize>, m_s: usize) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("block dims must be nonempty and positive".into()));
        }
        if m_s == 0 || m_s > dims.len() {
            return Err(Error::InvalidInput(format!(
                "m_s = {m_s} outside 1..={}",
                dims.len()
            )));
        }
        let mut var_block = Vec::with_capacity(dims.iter().sum());
        for (k, &dk) in dims.iter().enumerate() {
            var_block.extend(std::iter::repeat(k).take(dk));
        }
        let stable_dim = dims[..m_s].iter().sum();
        Ok(BlockStructure {
            dims,
            m_s,
            var_block,
            stable_dim,
        })
    }

    /// Ambient dimension d.
    pub fn d(&self) -> usize {
        self.var_block.len()
    }

    /// Number of blocks m.
    pub fn m(&self) -> usize {
        self.dims.len()
    }

    /// Number of stable blocks.
    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// d_s = dim of E_s.
    pub fn stable_dim(&self) -> usize {
        self.stable_dim
    }

    /// Block index (0-based) of a variable index.
    pub fn var_block(&self, var: usize) -> usize {
        self.var_block[var]
    }

    pub fn is_stable_var(&self, var: usize) -> bool {
        self.var_block[var] < self.m_s
    }

    pub fn is_transversal_block(&self, k: usize) -> bool {
        k >= self.m_s
    }

    /// Variable index range of block k.
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.dims[..k].iter().sum();
        start..start + self.dims[k]
    }

    /// Per-block degree vector of an exponent vector.
    pub fn block_degrees(&self, exponents: &[u32]) -> Vec<u32> {
        let mut n = vec![0u32; self.m()];
        for (v, &e) in exponents.iter().enumerate() {
            n[self.var_block[v]] += e;
        }
        n
    }

    pub fn x_degree(&self, exponents: &[u32]) -> u32 {
        exponents
            .iter()
            .enumerate()
            .filter(|(v, _)| self.is_stable_var(*v))
            .map(|(_, &e)| e)
            .sum()
    }

    pub fn y_degree(&self, exponents: &[u32]) -> u32 {
        exponents
            .iter()
            .enumerate()
            .filter(|(v, _)| !self.is_stable_var(*v))
            .map(|(_, &e)| e)
            .sum()
    }
}

/// Truncation region: total degree <= `max_degree` (the D of the jet
/// algebra), y-degree <= `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationOrder {
    ell: usize,
    max_degree: usize,
}

impl TruncationOrder {
    pub fn new(ell: usize, max_degree: usize) -> Result<Self> {
        if max_degree < 2 {
            return Err(Error::InvalidInput(format!(
                "max degree {max_degree} < 2"
            )));
        }
        if max_degree < ell {
            return Err(Error::InvalidInput(format!(
                "max degree {max_degree} below y-order {ell}"
            )));
        }
        Ok(TruncationOrder { ell, max_degree })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
}

/// One coefficient slot: a component index and an exponent vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonomialSlot {
    component: usize,
    exponents: Vec<u32>,
}

impl MonomialSlot {
    pub fn new(component: usize, exponents: Vec<u32>) -> Self {
        MonomialSlot {
            component,
            exponents,
        }
    }

    pub fn component(&self) -> usize {
        self.component
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

// Canonical order: component, then graded-lex on exponents.
impl Ord for MonomialSlot {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.component
            .cmp(&other.component)
            .then_with(|| self.total_degree().cmp(&other.total_degree()))
            .then_with(|| self.exponents.cmp(&other.exponents))
    }
}

impl PartialOrd for MonomialSlot {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MonomialSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "comp {} alpha {:?}", self.component + 1, self.exponents)
    }
}

type Poly<S> = BTreeMap<Vec<u32>, S>;

/// A polynomial jet map: linear part plus nonlinear coefficient table.
///
/// The linear part may be any matrix (identity for coordinate changes,
/// zero for "offsets" h with Id + h the actual map); validating
/// constructors enforce the stronger contracts the spec puts on maps.
#[derive(Debug, Clone, PartialEq)]
pub struct JetMap<S: Coeff> {
    blocks: BlockStructure,
    trunc: TruncationOrder,
    linear: Matrix<S>,
    coeffs: BTreeMap<MonomialSlot, S>,
}

impl<S: Coeff> JetMap<S> {
    /// Validated constructor for an invertible jet map (`make_jet`).
    ///
    /// With `strict` set, entries outside the truncation region are an
    /// error; otherwise they are dropped. Structural violations (constant
    /// or degree-1 entries, pure-x monomials in transversal components)
    /// are always errors.
    pub fn new(
        blocks: BlockStructure,
        trunc: TruncationOrder,
        linear: Matrix<S>,
        entries: Vec<(MonomialSlot, S)>,
        strict: bool,
    ) -> Result<Self> {
        if linear.dim() != blocks.d() {
            return Err(Error::ShapeMismatch(format!(
                "linear part is {}x{} for d = {}",
                linear.dim(),
                linear.dim(),
                blocks.d()
            )));
        }
        if linear.inverse().is_none() {
            return Err(Error::SingularLinear);
        }
        if !linear.preserves_stable(&blocks) {
            return Err(Error::StableLeak);
        }
        let coeffs = validate_entries(&blocks, &trunc, entries, strict)?;
        Ok(JetMap {
            blocks,
            trunc,
            linear,
            coeffs,
        })
    }

    /// Identity map.
    pub fn identity(blocks: BlockStructure, trunc: TruncationOrder) -> Self {
        let linear = Matrix::identity(blocks.d());
        JetMap {
            blocks,
            trunc,
            linear,
            coeffs: BTreeMap::new(),
        }
    }

    /// Purely linear jet map (matrix validated like `new`).
    pub fn from_linear(
        blocks: BlockStructure,
        trunc: TruncationOrder,
        linear: Matrix<S>,
    ) -> Result<Self> {
        Self::new(blocks, trunc, linear, Vec::new(), true)
    }

    /// Offset with zero linear part (the h of a coordinate change Id + h).
    pub fn offset(
        blocks: BlockStructure,
        trunc: TruncationOrder,
        entries: Vec<(MonomialSlot, S)>,
    ) -> Result<Self> {
        let coeffs = validate_entries(&blocks, &trunc, entries, true)?;
        let linear = Matrix::zero(blocks.d());
        Ok(JetMap {
            blocks,
            trunc,
            linear,
            coeffs,
        })
    }

    pub fn zero_offset(blocks: BlockStructure, trunc: TruncationOrder) -> Self {
        let linear = Matrix::zero(blocks.d());
        JetMap {
            blocks,
            trunc,
            linear,
            coeffs: BTreeMap::new(),
        }
    }

    pub(crate) fn from_parts(
        blocks: BlockStructure,
        trunc: TruncationOrder,
        linear: Matrix<S>,
        mut coeffs: BTreeMap<MonomialSlot, S>,
    ) -> Self {
        coeffs.retain(|_, c| !c.is_zero());
        let jet = JetMap {
            blocks,
            trunc,
            linear,
            coeffs,
        };
        debug_assert!(jet.slots_valid(), "internal op produced an invalid slot");
        jet
    }

    fn slots_valid(&self) -> bool {
        self.coeffs.iter().all(|(slot, _)| {
            validate_slot(&self.blocks, slot).is_ok()
                && slot.total_degree() as usize <= self.trunc.max_degree
                && self.blocks.y_degree(&slot.exponents) as usize <= self.trunc.ell
        })
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn trunc(&self) -> &TruncationOrder {
        &self.trunc
    }

    pub fn linear(&self) -> &Matrix<S> {
        &self.linear
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&MonomialSlot, &S)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, slot: &MonomialSlot) -> S {
        self.coeffs.get(slot).cloned().unwrap_or_else(S::zero)
    }

    pub fn nonlinear_slot_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn has_zero_linear(&self) -> bool {
        self.linear.is_zero_matrix()
    }

    pub fn has_identity_linear(&self) -> bool {
        self.linear.is_identity()
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.blocks != other.blocks || self.trunc != other.trunc {
            return Err(Error::ShapeMismatch(
                "operands disagree on blocks or truncation".into(),
            ));
        }
        Ok(())
    }

    /// Truncated jet of `self ∘ inner`.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        self.check_shape(inner)?;
        let d = self.blocks.d();
        let linear = self.linear.mul(&inner.linear);
        let mut acc: BTreeMap<MonomialSlot, S> = BTreeMap::new();

        // linear part of the outer map applied to inner's nonlinear terms
        for (slot, c) in &inner.coeffs {
            for k in 0..d {
                let l = self.linear.get(k, slot.component);
                if l.is_zero() {
                    continue;
                }
                add_coeff(
                    &mut acc,
                    MonomialSlot::new(k, slot.exponents.clone()),
                    l.clone() * c.clone(),
                );
            }
        }

        // outer nonlinear slots evaluated on the full inner polynomials
        if !self.coeffs.is_empty() {
            let inner_polys = inner.component_polys();
            let mut powers: Vec<Vec<Poly<S>>> = inner_polys
                .iter()
                .map(|p| vec![poly_one(d), p.clone()])
                .collect();
            for (slot, c) in &self.coeffs {
                let mut prod = poly_one(d);
                for (j, &e) in slot.exponents.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    ensure_power(&mut powers[j], e, &self.blocks, &self.trunc);
                    prod = poly_mul(&prod, &powers[j][e as usize], &self.blocks, &self.trunc);
                    if prod.is_empty() {
                        break;
                    }
                }
                for (alpha, v) in prod {
                    add_coeff(
                        &mut acc,
                        MonomialSlot::new(slot.component, alpha),
                        c.clone() * v,
                    );
                }
            }
        }

        Ok(Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            linear,
            acc,
        ))
    }

    /// Inverse within truncation, by graded recursion on the offset of
    /// `self ∘ L⁻¹` (formal power series inversion cut at D).
    pub fn invert(&self) -> Result<Self> {
        let l_inv = self
            .linear
            .structured_inverse(&self.blocks)
            .ok_or(Error::SingularLinear)?;
        let l_inv_jet = JetMap::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            l_inv,
            BTreeMap::new(),
        );
        // self ∘ L⁻¹ = Id + p̂ with p̂ nonlinear
        let p_hat = self.compose(&l_inv_jet)?.nonlinear_offset();
        // (Id + p̂)⁻¹ = Id + w with w = -p̂ ∘ (Id + w); one degree settles
        // per pass, so D passes reach the fixed point.
        let mut w = Self::zero_offset(self.blocks.clone(), self.trunc.clone());
        for _ in 0..self.trunc.max_degree {
            w = p_hat.compose(&w.to_id_plus())?.nonlinear_offset().neg();
        }
        l_inv_jet.compose(&w.to_id_plus())
    }

    /// `L⁻¹ ∘ self ∘ L` for an invertible, stable-preserving matrix.
    pub fn conjugate_linear(&self, l: &Matrix<S>) -> Result<Self> {
        if l.dim() != self.blocks.d() {
            return Err(Error::ShapeMismatch(format!(
                "conjugating matrix dim {} vs d = {}",
                l.dim(),
                self.blocks.d()
            )));
        }
        if !l.preserves_stable(&self.blocks) {
            return Err(Error::ShapeMismatch(
                "conjugating matrix must preserve the stable subspace".into(),
            ));
        }
        let l_inv = l
            .structured_inverse(&self.blocks)
            .ok_or(Error::SingularLinear)?;
        let l_jet = JetMap::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            l.clone(),
            BTreeMap::new(),
        );
        let l_inv_jet = JetMap::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            l_inv,
            BTreeMap::new(),
        );
        l_inv_jet.compose(self)?.compose(&l_jet)
    }

    /// Conjugation by the scalar map λ·Id: a degree-δ coefficient picks up
    /// λ^(1-δ); the linear part is unchanged.
    pub fn rescale(&self, lambda: &S) -> Result<Self> {
        if !(lambda > &S::zero()) {
            return Err(Error::NonPositiveScale);
        }
        let inv = S::one() / lambda.clone();
        let max_deg = self.trunc.max_degree as u32;
        let mut factors: Vec<S> = Vec::with_capacity(max_deg as usize + 1);
        for deg in 0..=max_deg {
            factors.push(if deg < 1 {
                S::one()
            } else {
                inv.pow_u(deg - 1)
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(slot, c)| {
                let delta = slot.total_degree();
                (slot.clone(), c.clone() * factors[delta as usize].clone())
            })
            .collect();
        Ok(Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            self.linear.clone(),
            coeffs,
        ))
    }

    /// Exact polynomial evaluation of the representative.
    pub fn evaluate(&self, point: &[S]) -> Result<Vec<S>> {
        let d = self.blocks.d();
        if point.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "point of length {} for d = {d}",
                point.len()
            )));
        }
        let mut out = self.linear.mul_vec(point);
        for (slot, c) in &self.coeffs {
            let mut term = c.clone();
            for (v, &e) in slot.exponents.iter().enumerate() {
                if e > 0 {
                    term = term * point[v].pow_u(e);
                }
            }
            out[slot.component] = out[slot.component].clone() + term;
        }
        Ok(out)
    }

    /// Weighted max over nonlinear coefficient magnitudes. Zero iff the
    /// map is purely linear.
    pub fn coeff_norm(&self, weights: Option<&dyn Fn(&MonomialSlot) -> S>) -> S {
        let mut best = S::zero();
        for (slot, c) in &self.coeffs {
            let w = weights.map(|f| f(slot)).unwrap_or_else(S::one);
            let v = w * c.clone().abs();
            if v > best {
                best = v;
            }
        }
        best
    }

    /// Entrywise difference (linear parts subtract too).
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let d = self.blocks.d();
        let mut linear = Matrix::zero(d);
        for r in 0..d {
            for c in 0..d {
                linear.set(
                    r,
                    c,
                    self.linear.get(r, c).clone() - other.linear.get(r, c).clone(),
                );
            }
        }
        let mut coeffs = self.coeffs.clone();
        for (slot, c) in &other.coeffs {
            add_coeff(&mut coeffs, slot.clone(), -c.clone());
        }
        Ok(Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            linear,
            coeffs,
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let d = self.blocks.d();
        let mut linear = Matrix::zero(d);
        for r in 0..d {
            for c in 0..d {
                linear.set(
                    r,
                    c,
                    self.linear.get(r, c).clone() + other.linear.get(r, c).clone(),
                );
            }
        }
        let mut coeffs = self.coeffs.clone();
        for (slot, c) in &other.coeffs {
            add_coeff(&mut coeffs, slot.clone(), c.clone());
        }
        Ok(Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            linear,
            coeffs,
        ))
    }

    pub fn neg(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(s, c)| (s.clone(), -c.clone()))
            .collect();
        let d = self.blocks.d();
        let mut linear = Matrix::zero(d);
        for r in 0..d {
            for c in 0..d {
                linear.set(r, c, -self.linear.get(r, c).clone());
            }
        }
        Self::from_parts(self.blocks.clone(), self.trunc.clone(), linear, coeffs)
    }

    /// Same nonlinear table, identity linear part (Id + self for offsets).
    pub fn to_id_plus(&self) -> Self {
        debug_assert!(self.has_zero_linear(), "to_id_plus expects an offset");
        Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            Matrix::identity(self.blocks.d()),
            self.coeffs.clone(),
        )
    }

    /// Nonlinear table only, zero linear part.
    pub fn nonlinear_offset(&self) -> Self {
        Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            Matrix::zero(self.blocks.d()),
            self.coeffs.clone(),
        )
    }

    /// Offset of `(Id + self) ∘ (Id + other) - Id` for offsets.
    pub fn offset_compose(&self, other: &Self) -> Result<Self> {
        Ok(self
            .to_id_plus()
            .compose(&other.to_id_plus())?
            .nonlinear_offset())
    }

    /// Slots of one fixed total degree, as an offset.
    pub fn degree_slice(&self, degree: u32) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(slot, _)| slot.total_degree() == degree)
            .map(|(s, c)| (s.clone(), c.clone()))
            .collect();
        Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            Matrix::zero(self.blocks.d()),
            coeffs,
        )
    }

    /// Keep slots matching a predicate (offset output).
    pub fn filter_slots(&self, keep: impl Fn(&MonomialSlot) -> bool) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(slot, _)| keep(slot))
            .map(|(s, c)| (s.clone(), c.clone()))
            .collect();
        Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            Matrix::zero(self.blocks.d()),
            coeffs,
        )
    }

    pub fn with_linear(&self, linear: Matrix<S>) -> Result<Self> {
        if linear.dim() != self.blocks.d() {
            return Err(Error::ShapeMismatch("linear dim mismatch".into()));
        }
        Ok(Self::from_parts(
            self.blocks.clone(),
            self.trunc.clone(),
            linear,
            self.coeffs.clone(),
        ))
    }

    fn component_polys(&self) -> Vec<Poly<S>> {
        let d = self.blocks.d();
        let mut polys: Vec<Poly<S>> = vec![BTreeMap::new(); d];
        for j in 0..d {
            for i in 0..d {
                let l = self.linear.get(j, i);
                if !l.is_zero() {
                    let mut alpha = vec![0u32; d];
                    alpha[i] = 1;
                    polys[j].insert(alpha, l.clone());
                }
            }
        }
        for (slot, c) in &self.coeffs {
            polys[slot.component].insert(slot.exponents.clone(), c.clone());
        }
        polys
    }
}

fn validate_slot(blocks: &BlockStructure, slot: &MonomialSlot) -> Result<()> {
    if slot.exponents.len() != blocks.d() {
        return Err(Error::ShapeMismatch(format!(
            "exponent vector of length {} for d = {}",
            slot.exponents.len(),
            blocks.d()
        )));
    }
    if slot.component >= blocks.d() {
        return Err(Error::IndexOutOfRange(format!(
            "component {} for d = {}",
            slot.component + 1,
            blocks.d()
        )));
    }
    let total = slot.total_degree();
    if total == 0 {
        return Err(Error::SlotViolation("constant term".into()));
    }
    if total == 1 {
        return Err(Error::SlotViolation(
            "degree-1 entry belongs in the linear part".into(),
        ));
    }
    let comp_block = blocks.var_block(slot.component);
    if blocks.is_transversal_block(comp_block) && blocks.y_degree(&slot.exponents) == 0 {
        return Err(Error::SlotViolation(format!(
            "pure-x monomial in transversal component {}",
            slot.component + 1
        )));
    }
    Ok(())
}

fn validate_entries<S: Coeff>(
    blocks: &BlockStructure,
    trunc: &TruncationOrder,
    entries: Vec<(MonomialSlot, S)>,
    strict: bool,
) -> Result<BTreeMap<MonomialSlot, S>> {
    let mut coeffs = BTreeMap::new();
    for (slot, value) in entries {
        validate_slot(blocks, &slot)?;
        let total = slot.total_degree() as usize;
        let ydeg = blocks.y_degree(&slot.exponents) as usize;
        if total > trunc.max_degree || ydeg > trunc.ell {
            if strict {
                return Err(Error::SlotViolation(format!(
                    "slot {slot} outside truncation (total {total}, y {ydeg})"
                )));
            }
            continue;
        }
        if value.is_zero() {
            continue;
        }
        add_coeff(&mut coeffs, slot, value);
    }
    coeffs.retain(|_, c| !c.is_zero());
    Ok(coeffs)
}

fn add_coeff<S: Coeff>(map: &mut BTreeMap<MonomialSlot, S>, slot: MonomialSlot, v: S) {
    if v.is_zero() {
        return;
    }
    match map.entry(slot) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(v);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let sum = e.get().clone() + v;
            if sum.is_zero() {
                e.remove();
            } else {
                *e.get_mut() = sum;
            }
        }
    }
}

fn poly_one<S: Coeff>(d: usize) -> Poly<S> {
    let mut p = BTreeMap::new();
    p.insert(vec![0u32; d], S::one());
    p
}

fn poly_mul<S: Coeff>(
    a: &Poly<S>,
    b: &Poly<S>,
    blocks: &BlockStructure,
    trunc: &TruncationOrder,
) -> Poly<S> {
    let mut out: Poly<S> = BTreeMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let alpha: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let total: u32 = alpha.iter().sum();
            if total as usize > trunc.max_degree {
                continue;
            }
            if blocks.y_degree(&alpha) as usize > trunc.ell {
                continue;
            }
            let v = ca.clone() * cb.clone();
            if v.is_zero() {
                continue;
            }
            match out.entry(alpha) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(v);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let sum = e.get().clone() + v;
                    if sum.is_zero() {
                        e.remove();
                    } else {
                        *e.get_mut() = sum;
                    }
                }
            }
        }
    }
    out
}

fn ensure_power<S: Coeff>(
    powers: &mut Vec<Poly<S>>,
    e: u32,
    blocks: &BlockStructure,
    trunc: &TruncationOrder,
) {
    while powers.len() <= e as usize {
        let next = poly_mul(powers.last().unwrap(), &powers[1], blocks, trunc);
        powers.push(next);
    }
}

/// Result of a log-log residual fit along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeFit {
    Slope { slope: f64, r2: f64, points: usize },
    /// Residual identically zero on the grid (the +infinity marker).
    ZeroResidual,
}

impl SlopeFit {
    pub fn slope_or_infinity(&self) -> f64 {
        match self {
            SlopeFit::Slope { slope, .. } => *slope,
            SlopeFit::ZeroResidual => f64::INFINITY,
        }
    }
}

/// Least-squares slope of `log ||a(t·dir) - b(t·dir)||` against `log t`,
/// the numerical surrogate for jet-equivalence order.
pub fn ray_residual_order<S: Coeff>(
    a: &JetMap<S>,
    b: &JetMap<S>,
    direction: &[S],
    t_grid: &[S],
) -> Result<SlopeFit> {
    let fa = |p: &[S]| a.evaluate(p);
    let fb = |p: &[S]| b.evaluate(p);
    ray_residual_order_fn(&fa, &fb, direction, t_grid)
}

/// Same fit for arbitrary pointwise maps (used for compositions that are
/// evaluated exactly, without jet truncation).
pub fn ray_residual_order_fn<S: Coeff>(
    a: &dyn Fn(&[S]) -> Result<Vec<S>>,
    b: &dyn Fn(&[S]) -> Result<Vec<S>>,
    direction: &[S],
    t_grid: &[S],
) -> Result<SlopeFit> {
    if t_grid.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 4 scales, got {}",
            t_grid.len()
        )));
    }
    if direction.iter().all(|v| v.is_zero()) {
        return Err(Error::DegenerateGrid("zero direction".into()));
    }
    for w in t_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::DegenerateGrid("scales must be strictly decreasing".into()));
        }
    }
    if !(t_grid[t_grid.len() - 1] > S::zero()) {
        return Err(Error::DegenerateGrid("scales must be positive".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in t_grid {
        let point: Vec<S> = direction.iter().map(|v| v.clone() * t.clone()).collect();
        let va = a(&point)?;
        let vb = b(&point)?;
        let res: f64 = va
            .iter()
            .zip(&vb)
            .map(|(x, y)| {
                let diff = (x.clone() - y.clone()).to_f64();
                diff * diff
            })
            .sum::<f64>()
            .sqrt();
        if res > 0.0 {
            xs.push(t.to_f64().ln());
            ys.push(res.ln());
        }
    }
    if xs.len() < 2 {
        return Ok(SlopeFit::ZeroResidual);
    }
    let (slope, _, r2) = crate::fit::linear_fit(&xs, &ys);
    Ok(SlopeFit::Slope {
        slope,
        r2,
        points: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{Coeff, Rational};

    fn rat(n: i64, d: i64) -> Rational {
        Coeff::ratio(n, d)
    }

    fn line_blocks() -> BlockStructure {
        BlockStructure::new(vec![1], 1).unwrap()
    }

    // SPEC-A shapes: one stable and one transversal 1-dim block
    fn saddle_blocks() -> BlockStructure {
        BlockStructure::new(vec![1, 1], 1).unwrap()
    }

    // SPEC-B shapes: two stable 1-dim blocks
    fn stable2_blocks() -> BlockStructure {
        BlockStructure::new(vec![1, 1], 2).unwrap()
    }

    fn slot(comp: usize, alpha: &[u32]) -> MonomialSlot {
        MonomialSlot::new(comp, alpha.to_vec())
    }

    fn line_jet(entries: &[(u32, i64, i64)], max_degree: usize) -> JetMap<Rational> {
        let trunc = TruncationOrder::new(0, max_degree).unwrap();
        JetMap::new(
            line_blocks(),
            trunc,
            Matrix::identity(1),
            entries
                .iter()
                .map(|&(e, n, d)| (slot(0, &[e]), rat(n, d)))
                .collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn make_jet_identity() {
        let trunc = TruncationOrder::new(0, 2).unwrap();
        let jet = JetMap::<Rational>::new(
            line_blocks(),
            trunc,
            Matrix::identity(1),
            vec![],
            true,
        )
        .unwrap();
        assert!(jet.has_identity_linear());
        assert_eq!(jet.nonlinear_slot_count(), 0);
    }

    #[test]
    fn make_jet_rejects_pure_x_in_transversal_component() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        // x1^2 placed in the y-component
        let err = JetMap::<Rational>::new(
            saddle_blocks(),
            trunc,
            Matrix::identity(2),
            vec![(slot(1, &[2, 0]), rat(1, 1))],
            true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SlotViolation(_)));
        // degree-1 entry in the nonlinear table
        let err = JetMap::<Rational>::new(
            saddle_blocks(),
            trunc,
            Matrix::identity(2),
            vec![(slot(1, &[1, 0]), rat(1, 1))],
            true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SlotViolation(_)));
    }

    #[test]
    fn make_jet_solver_example_is_valid() {
        let trunc = TruncationOrder::new(0, 2).unwrap();
        let jet = JetMap::new(
            stable2_blocks(),
            trunc,
            Matrix::diagonal(&[rat(1, 4), rat(1, 2)]),
            vec![(slot(0, &[1, 1]), rat(1, 1))],
            true,
        )
        .unwrap();
        assert_eq!(jet.coeff(&slot(0, &[1, 1])), rat(1, 1));
    }

    #[test]
    fn make_jet_strict_flag_controls_overflow() {
        let trunc = TruncationOrder::new(0, 2).unwrap();
        let over = vec![(slot(0, &[3]), rat(1, 1))];
        let err = JetMap::<Rational>::new(
            line_blocks(),
            trunc.clone(),
            Matrix::identity(1),
            over.clone(),
            true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SlotViolation(_)));
        let jet =
            JetMap::new(line_blocks(), trunc, Matrix::identity(1), over, false).unwrap();
        assert_eq!(jet.nonlinear_slot_count(), 0);
    }

    #[test]
    fn make_jet_rejects_singular_and_leaking_linear() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let err = JetMap::<Rational>::new(
            saddle_blocks(),
            trunc.clone(),
            Matrix::zero(2),
            vec![],
            true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularLinear));
        // linear sends x into y
        let mut leak = Matrix::identity(2);
        leak.set(1, 0, rat(1, 1));
        let err = JetMap::<Rational>::new(saddle_blocks(), trunc, leak, vec![], true)
            .unwrap_err();
        assert!(matches!(err, Error::StableLeak));
    }

    #[test]
    fn compose_one_dimensional_square() {
        // (Id + x²) ∘ (Id + x²) = Id + 2x² + 2x³ at D = 3
        let a = line_jet(&[(2, 1, 1)], 3);
        let c = a.compose(&a).unwrap();
        assert_eq!(c.coeff(&slot(0, &[2])), rat(2, 1));
        assert_eq!(c.coeff(&slot(0, &[3])), rat(2, 1));
        assert_eq!(c.nonlinear_slot_count(), 2);
    }

    #[test]
    fn compose_identity_laws() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let id = JetMap::<Rational>::identity(saddle_blocks(), trunc.clone());
        let a = JetMap::new(
            saddle_blocks(),
            trunc,
            Matrix::diagonal(&[rat(1, 2), rat(2, 1)]),
            vec![(slot(0, &[0, 2]), rat(1, 1))],
            true,
        )
        .unwrap();
        assert_eq!(id.compose(&a).unwrap(), a);
        assert_eq!(a.compose(&id).unwrap(), a);
    }

    #[test]
    fn compose_saddle_example() {
        // outer = Id + (y², 0), inner = Id + (xy, 0) -> Id + (xy + y², 0)
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let outer = JetMap::new(
            saddle_blocks(),
            trunc.clone(),
            Matrix::identity(2),
            vec![(slot(0, &[0, 2]), rat(1, 1))],
            true,
        )
        .unwrap();
        let inner = JetMap::new(
            saddle_blocks(),
            trunc,
            Matrix::identity(2),
            vec![(slot(0, &[1, 1]), rat(1, 1))],
            true,
        )
        .unwrap();
        let c = outer.compose(&inner).unwrap();
        assert_eq!(c.coeff(&slot(0, &[1, 1])), rat(1, 1));
        assert_eq!(c.coeff(&slot(0, &[0, 2])), rat(1, 1));
        assert_eq!(c.nonlinear_slot_count(), 2);
        assert!(c.has_identity_linear());
    }

    #[test]
    fn invert_one_dimensional() {
        let a = line_jet(&[(2, 1, 1)], 3);
        let b = a.invert().unwrap();
        assert_eq!(b.coeff(&slot(0, &[2])), rat(-1, 1));
        assert_eq!(b.coeff(&slot(0, &[3])), rat(2, 1));
        let id = JetMap::identity(line_blocks(), *a.trunc());
        assert_eq!(a.compose(&b).unwrap(), id);
        assert_eq!(b.compose(&a).unwrap(), id);
    }

    #[test]
    fn invert_identity_and_shear() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let id = JetMap::<Rational>::identity(saddle_blocks(), trunc.clone());
        assert_eq!(id.invert().unwrap(), id);
        // Id + (y², 0): second component untouched, so inverse is Id - (y², 0)
        let a = JetMap::new(
            saddle_blocks(),
            trunc,
            Matrix::identity(2),
            vec![(slot(0, &[0, 2]), rat(1, 1))],
            true,
        )
        .unwrap();
        let b = a.invert().unwrap();
        assert_eq!(b.coeff(&slot(0, &[0, 2])), rat(-1, 1));
        assert_eq!(b.nonlinear_slot_count(), 1);
        assert_eq!(a.compose(&b).unwrap(), id);
    }

    #[test]
    fn conjugate_scales_by_eigenfactor() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let l = Matrix::diagonal(&[rat(1, 2), rat(2, 1)]);
        // (x1², 0): coefficient scales by e^E with E = -χ1 + 2χ1, factor 1/2
        let a = JetMap::new(
            saddle_blocks(),
            trunc.clone(),
            Matrix::identity(2),
            vec![(slot(0, &[2, 0]), rat(1, 1))],
            true,
        )
        .unwrap();
        let c = a.conjugate_linear(&l).unwrap();
        assert_eq!(c.coeff(&slot(0, &[2, 0])), rat(1, 2));
        // (y², 0): factor e^{E(1,(0,2))} = 8
        let a = JetMap::new(
            saddle_blocks(),
            trunc.clone(),
            Matrix::identity(2),
            vec![(slot(0, &[0, 2]), rat(1, 1))],
            true,
        )
        .unwrap();
        let c = a.conjugate_linear(&l).unwrap();
        assert_eq!(c.coeff(&slot(0, &[0, 2])), rat(8, 1));
        // identity is fixed by conjugation
        let id = JetMap::<Rational>::identity(saddle_blocks(), trunc);
        assert_eq!(id.conjugate_linear(&l).unwrap(), id);
    }

    #[test]
    fn rescale_examples() {
        let a = line_jet(&[(2, 1, 1)], 3);
        assert_eq!(a.rescale(&rat(1, 1)).unwrap(), a);
        let r = a.rescale(&rat(10, 1)).unwrap();
        assert_eq!(r.coeff(&slot(0, &[2])), rat(1, 10));
        let a3 = line_jet(&[(3, 1, 1)], 3);
        let r3 = a3.rescale(&rat(10, 1)).unwrap();
        assert_eq!(r3.coeff(&slot(0, &[3])), rat(1, 100));
        assert!(matches!(
            a.rescale(&rat(0, 1)),
            Err(Error::NonPositiveScale)
        ));
    }

    #[test]
    fn rescale_is_scalar_conjugation() {
        let a = line_jet(&[(2, 1, 2), (3, -1, 3)], 4);
        let lambda = rat(4, 1);
        let by_conj = a
            .conjugate_linear(&Matrix::diagonal(&[rat(1, 4)]))
            .unwrap();
        assert_eq!(a.rescale(&lambda).unwrap(), by_conj);
    }

    #[test]
    fn evaluate_examples() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let id = JetMap::<f64>::identity(saddle_blocks(), trunc);
        assert_eq!(id.evaluate(&[0.3, -0.2]).unwrap(), vec![0.3, -0.2]);

        let a = line_jet(&[(2, 1, 1)], 3);
        assert_eq!(a.evaluate(&[rat(2, 1)]).unwrap(), vec![rat(6, 1)]);

        let f = JetMap::new(
            stable2_blocks(),
            TruncationOrder::new(0, 2).unwrap(),
            Matrix::diagonal(&[rat(1, 4), rat(1, 2)]),
            vec![(slot(0, &[1, 1]), rat(1, 1))],
            true,
        )
        .unwrap();
        assert_eq!(
            f.evaluate(&[rat(1, 1), rat(1, 1)]).unwrap(),
            vec![rat(5, 4), rat(1, 2)]
        );
    }

    #[test]
    fn coeff_norm_examples() {
        let trunc = TruncationOrder::new(2, 3).unwrap();
        let id = JetMap::<Rational>::identity(saddle_blocks(), trunc.clone());
        assert_eq!(id.coeff_norm(None), rat(0, 1));

        let a = JetMap::new(
            saddle_blocks(),
            trunc,
            Matrix::identity(2),
            vec![(slot(0, &[2, 0]), rat(1, 1))],
            true,
        )
        .unwrap();
        assert_eq!(a.coeff_norm(None), rat(1, 1));

        let c = line_jet(&[(2, 2, 1), (3, 2, 1)], 3);
        let weights = |s: &MonomialSlot| -> Rational {
            if s.total_degree() == 3 {
                rat(1, 4)
            } else {
                rat(1, 1)
            }
        };
        assert_eq!(c.coeff_norm(Some(&weights)), rat(2, 1));
    }

    #[test]
    fn ray_slope_recovers_monomial_order() {
        let grid: Vec<f64> = vec![1e-1, 1e-2, 1e-3, 1e-4];
        let trunc = TruncationOrder::new(0, 5).unwrap();
        let id = JetMap::<f64>::identity(line_blocks(), trunc.clone());
        let cubic = JetMap::new(
            line_blocks(),
            trunc.clone(),
            Matrix::identity(1),
            vec![(slot(0, &[3]), 1.0)],
            true,
        )
        .unwrap();
        match ray_residual_order(&cubic, &id, &[1.0], &grid).unwrap() {
            SlopeFit::Slope { slope, .. } => assert!((slope - 3.0).abs() < 0.05),
            other => panic!("expected slope, got {other:?}"),
        }

        let quad = JetMap::new(
            line_blocks(),
            trunc.clone(),
            Matrix::identity(1),
            vec![(slot(0, &[2]), 1.0)],
            true,
        )
        .unwrap();
        let quad_plus = JetMap::new(
            line_blocks(),
            trunc,
            Matrix::identity(1),
            vec![(slot(0, &[2]), 1.0), (slot(0, &[5]), 1.0)],
            true,
        )
        .unwrap();
        match ray_residual_order(&quad_plus, &quad, &[1.0], &grid).unwrap() {
            SlopeFit::Slope { slope, .. } => assert!((slope - 5.0).abs() < 0.05),
            other => panic!("expected slope, got {other:?}"),
        }

        assert_eq!(
            ray_residual_order(&quad, &quad, &[1.0], &grid).unwrap(),
            SlopeFit::ZeroResidual
        );
        assert!(matches!(
            ray_residual_order(&quad, &quad, &[1.0], &grid[..3]),
            Err(Error::DegenerateGrid(_))
        ));
    }
}
