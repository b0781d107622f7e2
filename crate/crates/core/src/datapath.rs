//! Emulator of the shared arithmetic datapath.
//!
//! The pool holds one butterfly unit per NTT stage plus the two modular
//! multipliers that sit in front of the NTT (psi scaling and pointwise
//! products). Units switch between NTT duty and general integer arithmetic.
//! Sampler arithmetic is compiled onto borrowed units as micro-ops: wide
//! multiplies become limb products plus a carry chain, and wide additions
//! become cascaded unit-width segments.
//!
//! The model is functional. It tracks unit modes and counts micro-ops per
//! component but does not model clock cycles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{ceil_log2, ParameterSet, RingParams};
use crate::ntt::{NttError, NttObserver, NttPlan, Polynomial};
use crate::rng::BitSource;
use crate::sampler_ky::{self, KyArith, KyError, KyOptions, ProbabilityMatrix};
use crate::sampler_zig::{self, ZigArith, ZigError, ZigguratTable};

#[derive(Debug, Error)]
pub enum DatapathError {
    #[error("unit {unit} is in mode {mode:?}, which cannot serve this operation")]
    ModeConflict { unit: usize, mode: UnitMode },
    #[error("operand {value} exceeds {width} bits")]
    OperandOverflow { value: i128, width: u32 },
    #[error("{width}-bit cascade needs {needed} adders, {available} available (or the sum overflows)")]
    WidthOverflow { width: u32, needed: usize, available: usize },
    #[error("invalid unit assignment: {0}")]
    InvalidAssignment(String),
    #[error(transparent)]
    Ntt(#[from] NttError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Ky(#[from] KyError),
    #[error(transparent)]
    Zig(#[from] ZigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitMode {
    NttButterfly,
    ModAdd,
    ModMul,
    GeneralAdd,
    GeneralMul,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    /// Butterfly unit serving one NTT stage.
    NttStage(usize),
    /// Modular multiplier in front of the NTT; mul modes only.
    PreNtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatapathUnit {
    pub id: usize,
    pub kind: UnitKind,
    pub mode: UnitMode,
    pub width: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    SamplerControl,
    Ntt,
    Rlwe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroOp {
    pub op: OpKind,
    pub a: i128,
    pub b: i128,
    pub carry_in: u8,
    pub attributed_to: Component,
    pub unit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Configure(Vec<UnitMode>),
    Op(MicroOp),
}

/// Schedule for a `64 x w`-bit multiply on unit-width limbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideMulPlan {
    pub limb_width: u32,
    pub num_limbs: u32,
    /// Width of the narrow operand.
    pub small_width: u32,
    /// `limb_width + small_width`.
    pub partial_width: u32,
    pub num_carry_adds: u32,
    pub mul_units: Vec<usize>,
    pub add_units: Vec<usize>,
}

impl WideMulPlan {
    pub const WIDE_BITS: u32 = 64;

    pub fn new(limb_width: u32, small_width: u32, mul_units: Vec<usize>, add_units: Vec<usize>) -> Self {
        let num_limbs = Self::WIDE_BITS.div_ceil(limb_width);
        let top_bits = Self::WIDE_BITS - (num_limbs - 1) * limb_width;
        // The top partial needs its own add only when it can spill past the frame.
        let spill = top_bits + small_width > limb_width;
        WideMulPlan {
            limb_width,
            num_limbs,
            small_width,
            partial_width: limb_width + small_width,
            num_carry_adds: num_limbs - 1 + u32::from(spill),
            mul_units,
            add_units,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentUsage {
    pub mul_ops: u64,
    pub add_ops: u64,
    pub dedicated_muls: u64,
    pub borrowed_units: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceReport {
    pub components: BTreeMap<Component, ComponentUsage>,
}

impl Default for ResourceReport {
    fn default() -> Self {
        let components = [Component::SamplerControl, Component::Ntt, Component::Rlwe]
            .into_iter()
            .map(|c| (c, ComponentUsage::default()))
            .collect();
        ResourceReport { components }
    }
}

impl ResourceReport {
    pub fn get(&self, c: Component) -> &ComponentUsage {
        &self.components[&c]
    }

    fn get_mut(&mut self, c: Component) -> &mut ComponentUsage {
        self.components.entry(c).or_default()
    }

    /// NTT units belong to the NTT; every other component borrows them.
    fn record(&mut self, op: &MicroOp, ntt_mul_units: &mut BTreeSet<usize>) {
        let usage = self.get_mut(op.attributed_to);
        match op.op {
            OpKind::Mul => usage.mul_ops += 1,
            OpKind::Add | OpKind::Sub => usage.add_ops += 1,
        }
        if op.attributed_to == Component::Ntt {
            if op.op == OpKind::Mul && ntt_mul_units.insert(op.unit) {
                usage.dedicated_muls = ntt_mul_units.len() as u64;
            }
        } else {
            usage.borrowed_units.insert(op.unit);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aggregate a trace into per-component counts.
pub fn resource_report(trace: &[TraceEvent]) -> ResourceReport {
    let mut report = ResourceReport::default();
    let mut ntt_mul_units = BTreeSet::new();
    for ev in trace {
        if let TraceEvent::Op(op) = ev {
            report.record(op, &mut ntt_mul_units);
        }
    }
    report
}

/// Whether any unit serves both the NTT and the sampler without a reconfiguration in between.
pub fn trace_interleaves(trace: &[TraceEvent]) -> bool {
    let mut last: BTreeMap<usize, bool> = BTreeMap::new();
    for ev in trace {
        match ev {
            TraceEvent::Configure(_) => last.clear(),
            TraceEvent::Op(op) => {
                let is_ntt = match op.attributed_to {
                    Component::Ntt => true,
                    Component::SamplerControl => false,
                    Component::Rlwe => continue,
                };
                if let Some(&prev) = last.get(&op.unit) {
                    if prev != is_ntt {
                        return true;
                    }
                }
                last.insert(op.unit, is_ntt);
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ky,
    Zig,
}

#[derive(Debug, Clone)]
pub enum SamplerTables {
    Ky(ProbabilityMatrix),
    Zig(ZigguratTable),
}

impl SamplerTables {
    pub fn build(alg: Algorithm, params: &ParameterSet, m: usize) -> Result<Self, RunError> {
        Ok(match alg {
            Algorithm::Ky => SamplerTables::Ky(sampler_ky::build_probability_matrix(&params.gauss)?),
            Algorithm::Zig => SamplerTables::Zig(sampler_zig::build_ziggurat_table(&params.gauss, m)?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            SamplerTables::Ky(_) => Algorithm::Ky,
            SamplerTables::Zig(_) => Algorithm::Zig,
        }
    }

    pub fn max_value(&self) -> u64 {
        match self {
            SamplerTables::Ky(pm) => pm.max_value(),
            SamplerTables::Zig(t) => t.max_value(),
        }
    }
}

pub struct Datapath {
    units: Vec<DatapathUnit>,
    n_stage_units: usize,
    unit_width: u32,
    trace: Option<Vec<TraceEvent>>,
    report: ResourceReport,
    ntt_mul_units: BTreeSet<usize>,
    add_units: Vec<usize>,
    mul_units: Vec<usize>,
    plan: Option<WideMulPlan>,
    next_pre: usize,
    next_add: usize,
}

impl Datapath {
    /// Pool for `ring`, configured for the NTT.
    pub fn new(ring: &RingParams) -> Self {
        let stages = ring.n.trailing_zeros() as usize;
        let width = ring.unit_width();
        let mut units: Vec<DatapathUnit> = (0..stages)
            .map(|s| DatapathUnit {
                id: s,
                kind: UnitKind::NttStage(s),
                mode: UnitMode::NttButterfly,
                width,
            })
            .collect();
        for k in 0..2 {
            units.push(DatapathUnit {
                id: stages + k,
                kind: UnitKind::PreNtt,
                mode: UnitMode::ModMul,
                width,
            });
        }
        Datapath {
            units,
            n_stage_units: stages,
            unit_width: width,
            trace: None,
            report: ResourceReport::default(),
            ntt_mul_units: BTreeSet::new(),
            add_units: Vec::new(),
            mul_units: Vec::new(),
            plan: None,
            next_pre: 0,
            next_add: 0,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn units(&self) -> &[DatapathUnit] {
        &self.units
    }

    pub fn unit_width(&self) -> u32 {
        self.unit_width
    }

    pub fn report(&self) -> &ResourceReport {
        &self.report
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    pub fn plan(&self) -> Option<&WideMulPlan> {
        self.plan.as_ref()
    }

    pub fn pre_ntt_units(&self) -> [usize; 2] {
        [self.n_stage_units, self.n_stage_units + 1]
    }

    pub fn configure_units(&mut self, assignment: &[UnitMode]) -> Result<(), DatapathError> {
        if assignment.len() != self.units.len() {
            return Err(DatapathError::InvalidAssignment(format!(
                "{} modes for {} units",
                assignment.len(),
                self.units.len()
            )));
        }
        for (u, &mode) in self.units.iter().zip(assignment) {
            if u.kind == UnitKind::PreNtt
                && !matches!(mode, UnitMode::ModMul | UnitMode::GeneralMul | UnitMode::Idle)
            {
                return Err(DatapathError::InvalidAssignment(format!(
                    "pre-NTT unit {} cannot take mode {mode:?}",
                    u.id
                )));
            }
        }
        for (u, &mode) in self.units.iter_mut().zip(assignment) {
            u.mode = mode;
        }
        self.add_units = self.ids_in(UnitMode::GeneralAdd);
        self.mul_units = self.ids_in(UnitMode::GeneralMul);
        self.next_add = 0;
        self.plan = None;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Configure(assignment.to_vec()));
        }
        Ok(())
    }

    fn ids_in(&self, mode: UnitMode) -> Vec<usize> {
        // NTT stage units first, then the pre-NTT multipliers.
        self.units.iter().filter(|u| u.mode == mode).map(|u| u.id).collect()
    }

    pub fn configure_ntt(&mut self) -> Result<(), DatapathError> {
        let modes: Vec<UnitMode> = self
            .units
            .iter()
            .map(|u| match u.kind {
                UnitKind::NttStage(_) => UnitMode::NttButterfly,
                UnitKind::PreNtt => UnitMode::ModMul,
            })
            .collect();
        self.configure_units(&modes)
    }

    /// Ziggurat: the pre-NTT multipliers and the first four stage units multiply, the rest add.
    pub fn configure_for_zig(&mut self, small_width: u32) -> Result<(), DatapathError> {
        let modes: Vec<UnitMode> = self
            .units
            .iter()
            .map(|u| match u.kind {
                UnitKind::NttStage(s) if s < 4 => UnitMode::GeneralMul,
                UnitKind::NttStage(_) => UnitMode::GeneralAdd,
                UnitKind::PreNtt => UnitMode::GeneralMul,
            })
            .collect();
        self.configure_units(&modes)?;
        self.plan = Some(WideMulPlan::new(
            self.unit_width,
            small_width,
            self.mul_units.clone(),
            self.add_units.clone(),
        ));
        Ok(())
    }

    /// Knuth-Yao: every stage unit adds; the pre-NTT multipliers idle.
    pub fn configure_for_ky(&mut self) -> Result<(), DatapathError> {
        let modes: Vec<UnitMode> = self
            .units
            .iter()
            .map(|u| match u.kind {
                UnitKind::NttStage(_) => UnitMode::GeneralAdd,
                UnitKind::PreNtt => UnitMode::Idle,
            })
            .collect();
        self.configure_units(&modes)
    }

    fn issue(&mut self, op: MicroOp) -> Result<(), DatapathError> {
        let unit = self.units[op.unit];
        let general = op.attributed_to == Component::SamplerControl;
        let ok = match (op.op, unit.mode) {
            (OpKind::Mul, UnitMode::GeneralMul) => general,
            (OpKind::Mul, UnitMode::ModMul | UnitMode::NttButterfly) => !general,
            (OpKind::Add | OpKind::Sub, UnitMode::GeneralAdd) => general,
            (OpKind::Add | OpKind::Sub, UnitMode::ModAdd | UnitMode::NttButterfly) => !general,
            _ => false,
        };
        if !ok {
            return Err(DatapathError::ModeConflict {
                unit: op.unit,
                mode: unit.mode,
            });
        }
        if general {
            for v in [op.a, op.b] {
                if v < 0 || v >> unit.width != 0 {
                    return Err(DatapathError::OperandOverflow {
                        value: v,
                        width: unit.width,
                    });
                }
            }
        }
        self.report.record(&op, &mut self.ntt_mul_units);
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Op(op));
        }
        Ok(())
    }

    fn sampler_op(&mut self, op: OpKind, a: u128, b: u128, carry_in: u8, unit: usize) -> Result<(), DatapathError> {
        self.issue(MicroOp {
            op,
            a: a as i128,
            b: b as i128,
            carry_in,
            attributed_to: Component::SamplerControl,
            unit,
        })
    }

    /// `k * x` on the configured plan: one limb product per limb, then the carry chain.
    pub fn wide_mul(&mut self, k: u64, x: u64) -> Result<u128, DatapathError> {
        let plan = self.plan.clone().ok_or(DatapathError::InvalidAssignment(
            "no multiply plan; configure the pool for the Ziggurat first".into(),
        ))?;
        if x >> plan.small_width != 0 {
            return Err(DatapathError::OperandOverflow {
                value: x as i128,
                width: plan.small_width,
            });
        }
        self.limb_mul(k, x, &plan)
    }

    fn limb_mul(&mut self, k: u64, x: u64, plan: &WideMulPlan) -> Result<u128, DatapathError> {
        let lw = plan.limb_width;
        let mask = (1u128 << lw) - 1;
        let mut partials = Vec::with_capacity(plan.num_limbs as usize);
        for j in 0..plan.num_limbs {
            let limb = (k as u128 >> (j * lw)) & mask;
            let unit = plan.mul_units[j as usize % plan.mul_units.len()];
            self.sampler_op(OpKind::Mul, limb, x as u128, 0, unit)?;
            partials.push(limb * x as u128);
        }
        // Segment j collects the low bits of partial j and the high bits of partial j-1.
        let mut result = partials[0] & mask;
        let mut carry: u128 = 0;
        let mut adds = 0;
        for j in 1..plan.num_limbs as usize {
            let lo = partials[j] & mask;
            let hi = partials[j - 1] >> lw;
            let unit = plan.add_units[adds % plan.add_units.len()];
            self.sampler_op(OpKind::Add, lo, hi, carry as u8, unit)?;
            adds += 1;
            let s = lo + hi + carry;
            result |= (s & mask) << (j as u32 * lw);
            carry = s >> lw;
        }
        let top = (partials[plan.num_limbs as usize - 1] >> lw) + carry;
        if adds < plan.num_carry_adds as usize {
            let unit = plan.add_units[adds % plan.add_units.len()];
            self.sampler_op(
                OpKind::Add,
                partials[plan.num_limbs as usize - 1] >> lw,
                0,
                carry as u8,
                unit,
            )?;
        } else {
            debug_assert_eq!(top, 0, "plan without a spill add produced top bits");
        }
        result |= top << (plan.num_limbs * lw);
        debug_assert_eq!(result, k as u128 * x as u128);
        Ok(result)
    }

    /// `a * b` for two 64-bit operands: one limb row per unit-width limb of `b`, accumulated with wide adds.
    pub fn full_mul(&mut self, a: u64, b: u64) -> Result<u128, DatapathError> {
        let base = self.plan.clone().ok_or(DatapathError::InvalidAssignment(
            "no multiply plan; configure the pool for the Ziggurat first".into(),
        ))?;
        let lw = self.unit_width;
        let row_plan = WideMulPlan::new(lw, lw, base.mul_units.clone(), base.add_units.clone());
        let rows = 64u32.div_ceil(lw);
        let mut acc: u128 = 0;
        for r in 0..rows {
            let limb = (b >> (r * lw)) & ((1u64 << lw) - 1);
            let row = self.limb_mul(a, limb, &row_plan)?;
            if r == 0 {
                acc = row;
            } else {
                acc = self.wide_add(acc, row << (r * lw))?;
            }
        }
        debug_assert_eq!(acc, a as u128 * b as u128);
        Ok(acc)
    }

    fn segments_of(&self, mut v: u128) -> usize {
        let mut n = 1;
        v >>= self.unit_width;
        while v != 0 {
            n += 1;
            v >>= self.unit_width;
        }
        n
    }

    /// Unsigned `a + b` in unit-width segments, reusing the adders across passes.
    pub fn wide_add(&mut self, a: u128, b: u128) -> Result<u128, DatapathError> {
        let sum = a.checked_add(b).ok_or(DatapathError::WidthOverflow {
            width: 128,
            needed: 0,
            available: self.add_units.len(),
        })?;
        self.segment_chain(OpKind::Add, a, b, 0, self.segments_of(a.max(b)))?;
        Ok(sum)
    }

    /// Unsigned `a - b` for `a >= b`, as `a + !b + 1` in segments.
    pub fn wide_sub(&mut self, a: u128, b: u128) -> Result<u128, DatapathError> {
        let diff = a.checked_sub(b).ok_or(DatapathError::OperandOverflow {
            value: -1,
            width: 128,
        })?;
        let segs = self.segments_of(a.max(b));
        let bits = segs as u32 * self.unit_width;
        let mask = if bits >= 128 { u128::MAX } else { (1u128 << bits) - 1 };
        self.segment_chain(OpKind::Sub, a, !b & mask, 1, segs)?;
        Ok(diff)
    }

    fn segment_chain(&mut self, op: OpKind, a: u128, b: u128, carry_in: u8, segs: usize) -> Result<(), DatapathError> {
        if self.add_units.is_empty() {
            return Err(DatapathError::WidthOverflow {
                width: segs as u32 * self.unit_width,
                needed: segs,
                available: 0,
            });
        }
        let w = self.unit_width;
        let mask = (1u128 << w) - 1;
        let mut carry = carry_in as u128;
        for s in 0..segs {
            let sa = (a >> (s as u32 * w)) & mask;
            let sb = (b >> (s as u32 * w)) & mask;
            let unit = self.add_units[self.next_add % self.add_units.len()];
            self.next_add += 1;
            self.sampler_op(op, sa, sb, carry as u8, unit)?;
            carry = (sa + sb + carry) >> w;
        }
        Ok(())
    }

    /// Signed sum of `operands` plus `carry_in` on a `width`-bit two's-complement
    /// register, split into unit-width segments on consecutive adders.
    pub fn cascaded_add(&mut self, operands: &[i128], carry_in: u8, width: u32) -> Result<i128, DatapathError> {
        let segs = width.div_ceil(self.unit_width) as usize;
        if segs > self.add_units.len() || width == 0 || width > 120 {
            return Err(DatapathError::WidthOverflow {
                width,
                needed: segs,
                available: self.add_units.len(),
            });
        }
        let lo = -(1i128 << (width - 1));
        let hi = (1i128 << (width - 1)) - 1;
        let fits = |v: i128| (lo..=hi).contains(&v);
        let overflow = DatapathError::WidthOverflow {
            width,
            needed: segs,
            available: self.add_units.len(),
        };
        let Some((&first, rest)) = operands.split_first() else {
            return Ok(carry_in as i128);
        };
        // Operands enter the register modulo 2^width; only the sums must fit.
        let mask = (1u128 << width) - 1;
        let seg_mask = (1u128 << self.unit_width) - 1;
        let mut acc = first;
        let mut cin = carry_in;
        for (idx, &b) in rest.iter().enumerate() {
            let carry_here = if idx == 0 { cin } else { 0 };
            let next = acc + b + carry_here as i128;
            if !fits(next) {
                return Err(overflow);
            }
            let ua = acc as u128 & mask;
            let ub = b as u128 & mask;
            let mut carry = carry_here as u128;
            for s in 0..segs {
                let sh = s as u32 * self.unit_width;
                let sa = (ua >> sh) & seg_mask;
                let sb = (ub >> sh) & seg_mask;
                let unit = self.add_units[s];
                self.sampler_op(OpKind::Add, sa, sb, carry as u8, unit)?;
                carry = (sa + sb + carry) >> self.unit_width;
            }
            acc = next;
            cin = 0;
        }
        if rest.is_empty() && cin != 0 {
            return self.cascaded_add(&[first, 0], cin, width);
        }
        Ok(acc)
    }

    /// Negacyclic product on the pool; requires the NTT configuration.
    pub fn poly_mul(&mut self, plan: &NttPlan, a: &Polynomial, b: &Polynomial) -> Result<Polynomial, DatapathError> {
        if let Some(u) = self.units.iter().find(|u| match u.kind {
            UnitKind::NttStage(_) => u.mode != UnitMode::NttButterfly,
            UnitKind::PreNtt => u.mode != UnitMode::ModMul,
        }) {
            return Err(DatapathError::ModeConflict {
                unit: u.id,
                mode: u.mode,
            });
        }
        let mut rec = NttRecorder { dp: self };
        Ok(plan.poly_mul_observed(a, b, &mut rec)?)
    }

    /// Coefficient-wise sum on the butterfly adders, attributed to the RLWE layer.
    pub fn poly_add(&mut self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial, DatapathError> {
        for (j, (&x, &y)) in a.coeffs.iter().zip(&b.coeffs).enumerate() {
            let unit = j % self.n_stage_units;
            if self.units[unit].mode != UnitMode::NttButterfly {
                return Err(DatapathError::ModeConflict {
                    unit,
                    mode: self.units[unit].mode,
                });
            }
            self.issue(MicroOp {
                op: OpKind::Add,
                a: x as i128,
                b: y as i128,
                carry_in: 0,
                attributed_to: Component::Rlwe,
                unit,
            })?;
        }
        Ok(a.add(b))
    }
}

struct NttRecorder<'a> {
    dp: &'a mut Datapath,
}

impl NttRecorder<'_> {
    fn ntt_op(&mut self, op: OpKind, a: u64, b: u64, unit: usize) {
        // Mode was checked before the transform started.
        self.dp
            .issue(MicroOp {
                op,
                a: a as i128,
                b: b as i128,
                carry_in: 0,
                attributed_to: Component::Ntt,
                unit,
            })
            .expect("pool configured for the NTT");
    }
}

impl NttObserver for NttRecorder<'_> {
    fn butterfly(&mut self, stage: usize, u: u64, v: u64, w: u64) {
        self.ntt_op(OpKind::Mul, w, v, stage);
        self.ntt_op(OpKind::Add, u, v, stage);
        self.ntt_op(OpKind::Sub, u, v, stage);
    }

    fn scalar_mul(&mut self, a: u64, b: u64) {
        let unit = self.dp.n_stage_units + self.dp.next_pre % 2;
        self.dp.next_pre += 1;
        self.ntt_op(OpKind::Mul, a, b, unit);
    }
}

impl KyArith for Datapath {
    fn column_update(&mut self, d: i64, carry_in: u8, hd: u32, width: u32) -> Result<i64, KyError> {
        // 2d is a wire shift; the adders see 2d and -hd with the bit as carry-in.
        Ok(self.cascaded_add(&[2 * d as i128, -(hd as i128)], carry_in, width)? as i64)
    }

    fn scan_add(&mut self, d: i64, bit: u8, width: u32) -> Result<i64, KyError> {
        Ok(self.cascaded_add(&[d as i128, bit as i128], 0, width)? as i64)
    }
}

impl ZigArith for Datapath {
    fn sub(&mut self, a: u128, b: u128) -> Result<u128, ZigError> {
        Ok(self.wide_sub(a, b)?)
    }

    fn ybar_mul(&mut self, y: u64, height: u64) -> Result<u128, ZigError> {
        Ok(self.full_mul(y, height)?)
    }

    fn line_mul(&mut self, k: u64, dx: u64) -> Result<u128, ZigError> {
        Ok(self.wide_mul(k, dx)?)
    }
}

/// Sampler with its own adder and multipliers, counting the work it does.
#[derive(Debug, Clone)]
pub struct Standalone {
    report: ResourceReport,
}

impl Standalone {
    /// Dedicated multipliers the standalone Ziggurat instantiates (line 9 and sLine).
    pub const ZIG_DEDICATED_MULS: u64 = 2;

    pub fn new(alg: Algorithm) -> Self {
        let mut report = ResourceReport::default();
        if alg == Algorithm::Zig {
            report.get_mut(Component::SamplerControl).dedicated_muls = Self::ZIG_DEDICATED_MULS;
        }
        Standalone { report }
    }

    pub fn report(&self) -> &ResourceReport {
        &self.report
    }

    fn count(&mut self, op: OpKind) {
        let usage = self.report.get_mut(Component::SamplerControl);
        match op {
            OpKind::Mul => usage.mul_ops += 1,
            _ => usage.add_ops += 1,
        }
    }
}

impl KyArith for Standalone {
    fn column_update(&mut self, d: i64, carry_in: u8, hd: u32, _width: u32) -> Result<i64, KyError> {
        self.count(OpKind::Add);
        Ok(2 * d + carry_in as i64 - hd as i64)
    }

    fn scan_add(&mut self, d: i64, bit: u8, _width: u32) -> Result<i64, KyError> {
        self.count(OpKind::Add);
        Ok(d + bit as i64)
    }
}

impl ZigArith for Standalone {
    fn sub(&mut self, a: u128, b: u128) -> Result<u128, ZigError> {
        self.count(OpKind::Sub);
        Ok(a - b)
    }

    fn ybar_mul(&mut self, y: u64, height: u64) -> Result<u128, ZigError> {
        self.count(OpKind::Mul);
        Ok(y as u128 * height as u128)
    }

    fn line_mul(&mut self, k: u64, dx: u64) -> Result<u128, ZigError> {
        self.count(OpKind::Mul);
        Ok(k as u128 * dx as u128)
    }
}

fn sample_with<A: KyArith + ZigArith>(
    tables: &SamplerTables,
    arith: &mut A,
    count: usize,
    seed: u64,
) -> Result<Vec<i64>, RunError> {
    let mut src = BitSource::new(seed);
    let mut out = Vec::with_capacity(count);
    match tables {
        SamplerTables::Ky(pm) => {
            for _ in 0..count {
                out.push(sampler_ky::ky_sample_with(pm, &mut src, arith, KyOptions::default())?.value);
            }
        }
        SamplerTables::Zig(t) => {
            for _ in 0..count {
                out.push(sampler_zig::zig_sample_with(t, &mut src, arith)?.value);
            }
        }
    }
    Ok(out)
}

/// Run the sampler on a pool borrowed from the NTT and return its output and resource use.
pub fn run_integrated_with(
    tables: &SamplerTables,
    ring: &RingParams,
    count: usize,
    seed: u64,
) -> Result<(Vec<i64>, ResourceReport), RunError> {
    let mut dp = Datapath::new(ring);
    match tables {
        SamplerTables::Ky(_) => dp.configure_for_ky()?,
        SamplerTables::Zig(t) => dp.configure_for_zig(ceil_log2(t.max_value() + 1))?,
    }
    let samples = sample_with(tables, &mut dp, count, seed)?;
    Ok((samples, dp.report))
}

pub fn run_standalone_with(tables: &SamplerTables, count: usize, seed: u64) -> Result<(Vec<i64>, ResourceReport), RunError> {
    let mut st = Standalone::new(tables.algorithm());
    let samples = sample_with(tables, &mut st, count, seed)?;
    Ok((samples, st.report))
}

pub fn run_integrated(alg: Algorithm, params: &ParameterSet, count: usize, seed: u64) -> Result<(Vec<i64>, ResourceReport), RunError> {
    let tables = SamplerTables::build(alg, params, sampler_zig::DEFAULT_M)?;
    run_integrated_with(&tables, &params.ring, count, seed)
}

pub fn run_standalone(alg: Algorithm, params: &ParameterSet, count: usize, seed: u64) -> Result<(Vec<i64>, ResourceReport), RunError> {
    let tables = SamplerTables::build(alg, params, sampler_zig::DEFAULT_M)?;
    run_standalone_with(&tables, count, seed)
}
