//! The wired surrogate network.
//!
//! A network advances the full 42-entry system state one 5 s step from two
//! lagged states and the exogenous input: VARMAX blocks run in wiring order
//! (each may take earlier blocks' current-step predictions as extra inputs),
//! the iodine/xenon physics block runs first, and the homologous pump physics
//! reconstructs pump speeds and heads last. Two variants exist: the original
//! seven-block net trained on nominal data over states normalized by their
//! 100%-power values, and the shock-adapted six-block net over raw values
//! whose first block predicts the secondary pump flow and feeds it to every
//! downstream block.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::fit::{fit_varmax, FitOptions, FitReport, Series};
use super::varmax::{varmax_predict, VarmaxParams};
use super::xenon::xenon_update;
use super::SurrogateError;
use crate::plant::constants::{PlantConstants, PumpConstants, XenonConstants, FULL_POWER, SG_EXIT_TEMP};
use crate::plant::PumpActuator;
use crate::state::{SystemState, VarId, N_VARS};

/// Exogenous input (Table A.1): time and target reactor power.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurrogateInput {
    /// Time [s].
    pub t: f64,
    /// Target reactor core power [W].
    pub target_power: f64,
}

/// Pump loss coefficients supplied by the pump-health model for the
/// homologous reconstruction hook.
#[derive(Debug, Clone, Copy)]
pub struct PumpContext {
    pub k_p: f64,
    pub k_s: f64,
}

impl Default for PumpContext {
    fn default() -> Self {
        PumpContext { k_p: 1.0, k_s: 1.0 }
    }
}

/// Extra input wired into a block beyond the exogenous pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feed {
    /// Current-step value of a variable produced earlier in wiring order.
    Current(VarId),
}

/// Declared shape of one VARMAX block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub vars: Vec<VarId>,
    pub feeds: Vec<Feed>,
}

impl BlockSpec {
    pub fn n_u(&self) -> usize {
        2 + self.feeds.len()
    }
}

/// One VARMAX block with its coefficient set and MA error buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub spec: BlockSpec,
    pub params: VarmaxParams,
    /// eps(k-1)..eps(k-q), most recent first, in block space.
    pub eps: Vec<DVector<f64>>,
}

/// State-space convention of the VARMAX blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Normalization {
    /// Variables divided by their values at the 100%-power fixed point
    /// (entries near zero fall back to unit scale).
    AtFullPower { scale: Vec<f64> },
    /// Unnormalized values in fixed engineering units (megawatts,
    /// bar-scale pressures, per-mille reactivities): a unit choice, not an
    /// operating-point normalization, keeping coefficient sensitivities
    /// commensurate across blocks.
    Units { scale: Vec<f64> },
    Raw,
}

/// Fixed per-family unit scale.
fn engineering_scale(id: VarId) -> f64 {
    use VarId::*;
    match id {
        QDotRx | QDotHx | QDotSg | C1 | C2 | C3 | C4 | C5 | C6 => 1e6,
        PCIn | PCOut | PIhxPIn | PIhxPOut | PIhxSIn | PIhxSOut | PSgIn | PSgOut | DpP | DpS => 1e5,
        NI | NXe | RhoM | RhoC | RhoF | RhoCr => 1e-3,
        _ => 1.0,
    }
}

impl Normalization {
    pub fn at_full_power(reference: &SystemState) -> Self {
        let scale = reference
            .0
            .iter()
            .map(|v| if v.abs() < 1e-9 { 1.0 } else { v.abs() })
            .collect();
        Normalization::AtFullPower { scale }
    }

    pub fn engineering_units() -> Self {
        Normalization::Units {
            scale: VarId::ALL.iter().map(|v| engineering_scale(*v)).collect(),
        }
    }

    fn scale_of(&self, id: VarId) -> f64 {
        match self {
            Normalization::AtFullPower { scale } | Normalization::Units { scale } => {
                scale[id.index()]
            }
            Normalization::Raw => 1.0,
        }
    }

    fn to_block(&self, id: VarId, raw: f64) -> f64 {
        raw / self.scale_of(id)
    }

    fn to_raw(&self, id: VarId, block: f64) -> f64 {
        block * self.scale_of(id)
    }

    fn input_pair(&self, u: &SurrogateInput) -> [f64; 2] {
        match self {
            Normalization::AtFullPower { .. } => [u.t / 86_400.0, u.target_power / FULL_POWER],
            Normalization::Units { .. } => [u.t, u.target_power / 1e6],
            Normalization::Raw => [u.t, u.target_power],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetVariant {
    Original,
    Shock,
}

/// Addressable coefficient kind inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoefKind {
    Intercept,
    /// 0-based lag index.
    Ar(usize),
    Input,
    /// 0-based lag index.
    Ma(usize),
}

/// Reference to one scalar coefficient of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamRef {
    pub block: usize,
    pub kind: CoefKind,
    pub row: usize,
    pub col: usize,
}

impl ParamRef {
    /// Human-readable label, e.g. `A1[II][0,3]` or `B[VI][2,0]`.
    pub fn label(&self, net: &SurrogateNet) -> String {
        let name = &net.blocks[self.block].spec.name;
        match self.kind {
            CoefKind::Intercept => format!("a[{name}][{}]", self.row),
            CoefKind::Ar(l) => format!("A{}[{name}][{},{}]", l + 1, self.row, self.col),
            CoefKind::Input => format!("B[{name}][{},{}]", self.row, self.col),
            CoefKind::Ma(l) => format!("M{}[{name}][{},{}]", l + 1, self.row, self.col),
        }
    }
}

impl fmt::Display for ParamRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CoefKind::Intercept => write!(f, "a[#{}][{}]", self.block, self.row),
            CoefKind::Ar(l) => write!(f, "A{}[#{}][{},{}]", l + 1, self.block, self.row, self.col),
            CoefKind::Input => write!(f, "B[#{}][{},{}]", self.block, self.row, self.col),
            CoefKind::Ma(l) => write!(f, "M{}[#{}][{},{}]", l + 1, self.block, self.row, self.col),
        }
    }
}

/// Pump-side physics data used by the reconstruction hook.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PumpPhysics {
    pub primary: PumpConstants,
    pub secondary: PumpConstants,
    pub rho_primary: f64,
    pub rho_secondary: f64,
    pub cp_primary: f64,
}

impl PumpPhysics {
    fn from_constants(c: &PlantConstants) -> Self {
        PumpPhysics {
            primary: c.primary_pump.clone(),
            secondary: c.secondary_pump.clone(),
            rho_primary: c.thermal.rho_primary,
            rho_secondary: c.thermal.rho_secondary,
            cp_primary: c.thermal.cp_primary,
        }
    }
}

/// The wired network of VARMAX blocks plus physics sub-models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateNet {
    pub variant: NetVariant,
    pub blocks: Vec<Block>,
    pub normalization: Normalization,
    pub xenon: XenonConstants,
    pub pump: PumpPhysics,
    /// Fine time step [s].
    pub dt: f64,
}

/// Variables produced by physics sub-models rather than VARMAX blocks.
fn physics_vars(variant: NetVariant) -> Vec<VarId> {
    let mut v = vec![
        VarId::T,
        VarId::NI,
        VarId::NXe,
        VarId::NP,
        VarId::NS,
        VarId::DpP,
        VarId::DpS,
    ];
    match variant {
        NetVariant::Original => {
            v.push(VarId::MDotPP);
            v.push(VarId::MDotPS);
        }
        NetVariant::Shock => {
            v.push(VarId::MDotPP);
            v.push(VarId::MDotC);
            v.push(VarId::MDotS);
            v.push(VarId::MDotSg);
        }
    }
    v
}

/// Block wiring of the original seven-block net.
pub fn original_block_specs() -> Vec<BlockSpec> {
    vec![
        BlockSpec {
            name: "I".into(),
            vars: vec![VarId::MDotC, VarId::MDotS, VarId::MDotSg],
            feeds: vec![Feed::Current(VarId::NI), Feed::Current(VarId::NXe)],
        },
        BlockSpec {
            name: "II".into(),
            vars: vec![VarId::QDotRx, VarId::QDotHx],
            feeds: vec![Feed::Current(VarId::MDotC)],
        },
        BlockSpec {
            name: "III".into(),
            vars: vec![
                VarId::TCIn,
                VarId::TCOut,
                VarId::TIhxPIn,
                VarId::TIhxPOut,
                VarId::TIhxSIn,
                VarId::TIhxSOut,
                VarId::TSgIn,
                VarId::TSgOut,
            ],
            feeds: vec![Feed::Current(VarId::MDotC), Feed::Current(VarId::MDotS)],
        },
        BlockSpec {
            name: "IV".into(),
            vars: vec![
                VarId::PCIn,
                VarId::PCOut,
                VarId::PIhxPIn,
                VarId::PIhxPOut,
                VarId::PIhxSIn,
                VarId::PIhxSOut,
                VarId::PSgIn,
                VarId::PSgOut,
            ],
            feeds: vec![Feed::Current(VarId::MDotC), Feed::Current(VarId::MDotS)],
        },
        BlockSpec {
            name: "V".into(),
            vars: vec![VarId::C1, VarId::C2, VarId::C3, VarId::C4, VarId::C5, VarId::C6],
            feeds: vec![Feed::Current(VarId::QDotRx)],
        },
        BlockSpec {
            name: "VI".into(),
            vars: vec![VarId::RhoM, VarId::RhoC, VarId::RhoF, VarId::RhoCr, VarId::ZCr],
            feeds: vec![Feed::Current(VarId::QDotRx), Feed::Current(VarId::NXe)],
        },
        BlockSpec {
            name: "VII".into(),
            vars: vec![VarId::QDotSg],
            feeds: vec![
                Feed::Current(VarId::MDotSg),
                Feed::Current(VarId::TSgIn),
                Feed::Current(VarId::TSgOut),
            ],
        },
    ]
}

/// Block wiring of the shock-adapted six-block net: the secondary pump flow
/// is predicted first and feeds every downstream block.
pub fn shock_block_specs() -> Vec<BlockSpec> {
    let feed = Feed::Current(VarId::MDotPS);
    vec![
        BlockSpec {
            name: "I".into(),
            vars: vec![VarId::MDotPS],
            feeds: vec![],
        },
        BlockSpec {
            name: "II".into(),
            vars: vec![VarId::QDotRx, VarId::QDotHx, VarId::QDotSg],
            feeds: vec![feed],
        },
        BlockSpec {
            name: "III".into(),
            vars: vec![
                VarId::TCIn,
                VarId::TCOut,
                VarId::TIhxPIn,
                VarId::TIhxPOut,
                VarId::TIhxSIn,
                VarId::TIhxSOut,
                VarId::TSgIn,
                VarId::TSgOut,
            ],
            feeds: vec![feed],
        },
        BlockSpec {
            name: "IV".into(),
            vars: vec![
                VarId::PCIn,
                VarId::PCOut,
                VarId::PIhxPIn,
                VarId::PIhxPOut,
                VarId::PIhxSIn,
                VarId::PIhxSOut,
                VarId::PSgIn,
                VarId::PSgOut,
            ],
            feeds: vec![feed],
        },
        BlockSpec {
            name: "V".into(),
            vars: vec![VarId::C1, VarId::C2, VarId::C3, VarId::C4, VarId::C5, VarId::C6],
            feeds: vec![feed, Feed::Current(VarId::QDotRx)],
        },
        BlockSpec {
            name: "VI".into(),
            vars: vec![VarId::RhoM, VarId::RhoC, VarId::RhoF, VarId::RhoCr, VarId::ZCr],
            feeds: vec![feed, Feed::Current(VarId::QDotRx), Feed::Current(VarId::NXe)],
        },
    ]
}

impl SurrogateNet {
    /// Validate coverage (every variable produced exactly once) and wiring
    /// acyclicity (feeds reference only already-produced variables).
    pub fn validate_wiring(&self) -> Result<(), SurrogateError> {
        let mut produced = [false; N_VARS];
        for v in physics_vars(self.variant) {
            produced[v.index()] = true;
        }
        // Xenon runs before the blocks; pump reconstruction runs after. Pump
        // products must therefore not be feeds unless block-produced earlier.
        let pre_pass: Vec<VarId> = vec![VarId::T, VarId::NI, VarId::NXe];
        let mut available = [false; N_VARS];
        for v in &pre_pass {
            available[v.index()] = true;
        }
        for block in &self.blocks {
            for feed in &block.spec.feeds {
                let Feed::Current(v) = feed;
                if !available[v.index()] {
                    return Err(SurrogateError::Wiring(format!(
                        "block {} feeds on {} before it is produced",
                        block.spec.name,
                        v.name()
                    )));
                }
            }
            for v in &block.spec.vars {
                if produced[v.index()] {
                    return Err(SurrogateError::Wiring(format!(
                        "{} produced more than once",
                        v.name()
                    )));
                }
                produced[v.index()] = true;
                available[v.index()] = true;
            }
            if block.params.p() > 2 {
                return Err(SurrogateError::Dimension(format!(
                    "block {} has {} state delays; the network carries two",
                    block.spec.name,
                    block.params.p()
                )));
            }
            if block.params.n_x() != block.spec.vars.len()
                || block.params.n_u() != block.spec.n_u()
            {
                return Err(SurrogateError::Dimension(format!(
                    "block {} params {}x{} vs spec {}x{}",
                    block.spec.name,
                    block.params.n_x(),
                    block.params.n_u(),
                    block.spec.vars.len(),
                    block.spec.n_u()
                )));
            }
        }
        if let Some(missing) = produced.iter().position(|p| !p) {
            return Err(SurrogateError::Wiring(format!(
                "{} produced by no block or physics model",
                VarId::ALL[missing].name()
            )));
        }
        Ok(())
    }

    fn block_lag(&self, spec: &BlockSpec, sys: &SystemState) -> DVector<f64> {
        DVector::from_iterator(
            spec.vars.len(),
            spec.vars.iter().map(|v| self.normalization.to_block(*v, sys[*v])),
        )
    }

    fn block_input(&self, spec: &BlockSpec, u: &SurrogateInput, current: &SystemState) -> DVector<f64> {
        let base = self.normalization.input_pair(u);
        let mut out = DVector::zeros(spec.n_u());
        out[0] = base[0];
        out[1] = base[1];
        for (i, feed) in spec.feeds.iter().enumerate() {
            let Feed::Current(v) = feed;
            out[2 + i] = self.normalization.to_block(*v, current[*v]);
        }
        out
    }

    /// Pure one-step evaluation with optional coefficient overrides (the
    /// ensemble substitutes its member-specific assimilated parameters).
    /// Overrides are applied as exact corrections on top of the stored
    /// coefficients; the stored net is not mutated.
    ///
    /// This is the innermost loop of ensemble propagation and governor
    /// prediction, written as allocation-free scalar accumulation over
    /// fixed-size buffers.
    pub fn eval_step_with(
        &self,
        lag2: &SystemState,
        lag1: &SystemState,
        u: &SurrogateInput,
        pumps: &PumpContext,
        overrides: &[(ParamRef, f64)],
    ) -> Result<SystemState, SurrogateError> {
        const MAX_BLOCK: usize = 12;
        let mut next = SystemState::zeros();
        next[VarId::T] = lag1[VarId::T] + self.dt;

        let (n_i, n_xe, _) = xenon_update(
            lag1[VarId::NI],
            lag1[VarId::NXe],
            lag1[VarId::QDotRx],
            self.dt,
            &self.xenon,
        );
        next[VarId::NI] = n_i;
        next[VarId::NXe] = n_xe;

        let base = self.normalization.input_pair(u);
        for (bi, block) in self.blocks.iter().enumerate() {
            let spec = &block.spec;
            let params = &block.params;
            let n = spec.vars.len();
            let n_u = spec.n_u();
            if n > MAX_BLOCK || n_u > MAX_BLOCK {
                return Err(SurrogateError::Dimension("block exceeds buffer".into()));
            }
            let mut l1 = [0.0f64; MAX_BLOCK];
            let mut l2 = [0.0f64; MAX_BLOCK];
            for (j, v) in spec.vars.iter().enumerate() {
                l1[j] = self.normalization.to_block(*v, lag1[*v]);
                l2[j] = self.normalization.to_block(*v, lag2[*v]);
            }
            let mut uin = [0.0f64; MAX_BLOCK];
            uin[0] = base[0];
            uin[1] = base[1];
            for (i, feed) in spec.feeds.iter().enumerate() {
                let Feed::Current(v) = feed;
                uin[2 + i] = self.normalization.to_block(*v, next[*v]);
            }
            let p = params.p();
            let a1 = params.ar.first().map(|m| m.as_slice());
            let a2 = params.ar.get(1).map(|m| m.as_slice());
            let b = params.input.as_slice();
            let ma_active = !block.eps.is_empty()
                && block
                    .eps
                    .iter()
                    .any(|e| e.iter().any(|x| *x != 0.0));

            let mut pred = [0.0f64; MAX_BLOCK];
            for i in 0..n {
                let mut acc = params.intercept[i];
                // Column-major dense storage: entry (i, j) lives at j*n + i.
                if let Some(a1) = a1 {
                    for j in 0..n {
                        acc += a1[j * n + i] * l1[j];
                    }
                }
                if let Some(a2) = a2 {
                    if p >= 2 {
                        for j in 0..n {
                            acc += a2[j * n + i] * l2[j];
                        }
                    }
                }
                for c in 0..n_u {
                    acc += b[c * n + i] * uin[c];
                }
                if ma_active {
                    for (l, m) in params.ma.iter().enumerate() {
                        let ms = m.as_slice();
                        let eps = &block.eps[l];
                        for j in 0..n {
                            acc += ms[j * n + i] * eps[j];
                        }
                    }
                }
                pred[i] = acc;
            }

            for (r, v) in overrides {
                if r.block != bi {
                    continue;
                }
                let stored = self.coef(r)?;
                let delta = v - stored;
                let regressor = match r.kind {
                    CoefKind::Intercept => 1.0,
                    CoefKind::Ar(0) => l1[r.col],
                    CoefKind::Ar(1) => l2[r.col],
                    CoefKind::Ar(_) => {
                        return Err(SurrogateError::UnknownParam(r.to_string()))
                    }
                    CoefKind::Input => uin[r.col],
                    CoefKind::Ma(l) => block
                        .eps
                        .get(l)
                        .map(|x| x[r.col])
                        .ok_or_else(|| SurrogateError::UnknownParam(r.to_string()))?,
                };
                pred[r.row] += delta * regressor;
            }

            for (j, v) in spec.vars.iter().enumerate() {
                let raw = self.normalization.to_raw(*v, pred[j]);
                if !raw.is_finite() {
                    return Err(SurrogateError::NonFinite(v.name().into()));
                }
                next[*v] = raw;
            }
        }

        self.pump_reconstruction(&mut next, pumps);
        if !next.is_finite() {
            return Err(SurrogateError::NonFinite("pump reconstruction".into()));
        }
        Ok(next)
    }

    fn pump_reconstruction(&self, next: &mut SystemState, pumps: &PumpContext) {
        match self.variant {
            NetVariant::Original => {
                next[VarId::MDotPP] = next[VarId::MDotC];
                next[VarId::MDotPS] = next[VarId::MDotS];
            }
            NetVariant::Shock => {
                // Secondary loop flows equal the block-predicted pump flow;
                // primary flow reconstructed from the core energy balance.
                let m_ps = next[VarId::MDotPS];
                next[VarId::MDotS] = m_ps;
                next[VarId::MDotSg] = m_ps;
                let dt_core = (next[VarId::TCOut] - next[VarId::TCIn]).max(20.0);
                let m_c = (next[VarId::QDotRx] / (self.pump.cp_primary * dt_core)).max(0.0);
                next[VarId::MDotC] = m_c;
                next[VarId::MDotPP] = m_c;
            }
        }
        let mut primary = PumpActuator::new(&self.pump.primary, pumps.k_p.max(1.0));
        let mut secondary = PumpActuator::new(&self.pump.secondary, pumps.k_s.max(1.0));
        let v_p = (next[VarId::MDotPP] / self.pump.rho_primary).max(0.0);
        let v_s = (next[VarId::MDotPS] / self.pump.rho_secondary).max(0.0);
        let r_p = self.pump.primary.loop_resistance();
        let r_s = self.pump.secondary.loop_resistance();
        primary.speed = primary.speed_for_flow(v_p, r_p);
        secondary.speed = secondary.speed_for_flow(v_s, r_s);
        next[VarId::NP] = primary.speed;
        next[VarId::NS] = secondary.speed;
        next[VarId::DpP] = r_p * v_p * v_p;
        next[VarId::DpS] = r_s * v_s * v_s;
    }

    /// Stateful step: evaluate, then advance the MA error buffers (zeros, the
    /// deterministic default).
    pub fn step(
        &mut self,
        lag2: &SystemState,
        lag1: &SystemState,
        u: &SurrogateInput,
        pumps: &PumpContext,
    ) -> Result<SystemState, SurrogateError> {
        let next = self.eval_step_with(lag2, lag1, u, pumps, &[])?;
        for block in &mut self.blocks {
            if !block.eps.is_empty() {
                block.eps.rotate_right(1);
                block.eps[0].fill(0.0);
            }
        }
        Ok(next)
    }

    fn coef(&self, r: &ParamRef) -> Result<f64, SurrogateError> {
        let b = self
            .blocks
            .get(r.block)
            .ok_or_else(|| SurrogateError::UnknownParam(r.to_string()))?;
        let v = match r.kind {
            CoefKind::Intercept => b.params.intercept.get(r.row).copied(),
            CoefKind::Ar(l) => b.params.ar.get(l).and_then(|m| m.get((r.row, r.col)).copied()),
            CoefKind::Input => b.params.input.get((r.row, r.col)).copied(),
            CoefKind::Ma(l) => b.params.ma.get(l).and_then(|m| m.get((r.row, r.col)).copied()),
        };
        v.ok_or_else(|| SurrogateError::UnknownParam(r.to_string()))
    }

    /// Gather coefficient values.
    pub fn theta(&self, refs: &[ParamRef]) -> Result<Vec<f64>, SurrogateError> {
        refs.iter().map(|r| self.coef(r)).collect()
    }

    /// Write coefficient values back into the stored matrices (the EnKF
    /// posterior-mean write-back).
    pub fn set_theta(&mut self, refs: &[ParamRef], values: &[f64]) -> Result<(), SurrogateError> {
        if refs.len() != values.len() {
            return Err(SurrogateError::Dimension("theta length".into()));
        }
        for (r, v) in refs.iter().zip(values) {
            self.coef(r)?; // existence check
            let b = &mut self.blocks[r.block];
            match r.kind {
                CoefKind::Intercept => b.params.intercept[r.row] = *v,
                CoefKind::Ar(l) => b.params.ar[l][(r.row, r.col)] = *v,
                CoefKind::Input => b.params.input[(r.row, r.col)] = *v,
                CoefKind::Ma(l) => b.params.ma[l][(r.row, r.col)] = *v,
            }
        }
        Ok(())
    }

    /// All point-prediction coefficients (a, A_i, B) of one block, the
    /// population a sensitivity study draws from. MA and noise-covariance
    /// entries are excluded: a deterministic one-step evaluation with zero
    /// error history does not see them.
    pub fn point_coef_refs(&self, block: usize) -> Vec<ParamRef> {
        let b = &self.blocks[block];
        let n = b.params.n_x();
        let mut out = Vec::new();
        for row in 0..n {
            out.push(ParamRef {
                block,
                kind: CoefKind::Intercept,
                row,
                col: 0,
            });
        }
        for l in 0..b.params.p() {
            for row in 0..n {
                for col in 0..n {
                    out.push(ParamRef {
                        block,
                        kind: CoefKind::Ar(l),
                        row,
                        col,
                    });
                }
            }
        }
        for row in 0..n {
            for col in 0..b.params.n_u() {
                out.push(ParamRef {
                    block,
                    kind: CoefKind::Input,
                    row,
                    col,
                });
            }
        }
        out
    }

    /// Index of a block by name.
    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.spec.name == name)
    }

    /// Adjust every block's intercept so the given steady state is an exact
    /// fixed point of the network under the given held target. Blocks are
    /// trimmed in wiring order, so feeds evaluated at the anchor are exact by
    /// the time a downstream block is trimmed.
    pub fn anchor_fixed_point(
        &mut self,
        anchor: &SystemState,
        target_power: f64,
    ) -> Result<(), SurrogateError> {
        let u = SurrogateInput {
            t: anchor[VarId::T],
            target_power,
        };
        for bi in 0..self.blocks.len() {
            let spec = self.blocks[bi].spec.clone();
            let mut lags = Vec::with_capacity(self.blocks[bi].params.p());
            for _ in 0..self.blocks[bi].params.p() {
                lags.push(self.block_lag(&spec, anchor));
            }
            let input = self.block_input(&spec, &u, anchor);
            let eps: Vec<DVector<f64>> = self.blocks[bi]
                .eps
                .iter()
                .map(|e| DVector::zeros(e.len()))
                .collect();
            let pred = varmax_predict(&self.blocks[bi].params, &lags, &input, &eps)?;
            let truth = self.block_lag(&spec, anchor);
            let delta = truth - pred;
            self.blocks[bi].params.intercept += delta;
        }
        Ok(())
    }

    /// Scale of one variable in the net's state space ("filter space": the
    /// space the assimilation ensemble lives in).
    pub fn filter_scale(&self, id: VarId) -> f64 {
        self.normalization.scale_of(id)
    }

    /// Convert a raw system state into filter space.
    pub fn to_filter(&self, sys: &SystemState) -> DVector<f64> {
        DVector::from_iterator(
            N_VARS,
            VarId::ALL.iter().map(|v| self.normalization.to_block(*v, sys[*v])),
        )
    }

    /// Convert a filter-space slice back to a raw system state.
    pub fn from_filter(&self, v: &[f64]) -> SystemState {
        let mut sys = SystemState::zeros();
        for (i, id) in VarId::ALL.iter().enumerate() {
            sys[*id] = self.normalization.to_raw(*id, v[i]);
        }
        sys
    }

    /// Parse a label produced by [`ParamRef::label`].
    pub fn parse_label(&self, label: &str) -> Result<ParamRef, SurrogateError> {
        let err = || SurrogateError::UnknownParam(label.to_string());
        let open = label.find('[').ok_or_else(err)?;
        let kind_str = &label[..open];
        let rest = &label[open..];
        let mut parts = Vec::new();
        let mut cur = rest;
        while let Some(start) = cur.find('[') {
            let end = cur[start..].find(']').ok_or_else(err)? + start;
            parts.push(&cur[start + 1..end]);
            cur = &cur[end + 1..];
        }
        if parts.len() != 2 {
            return Err(err());
        }
        let block = self.block_index(parts[0]).ok_or_else(err)?;
        let (row, col) = if let Some((r, c)) = parts[1].split_once(',') {
            (
                r.trim().parse().map_err(|_| err())?,
                c.trim().parse().map_err(|_| err())?,
            )
        } else {
            (parts[1].trim().parse().map_err(|_| err())?, 0)
        };
        let kind = match kind_str {
            "a" => CoefKind::Intercept,
            "B" => CoefKind::Input,
            s if s.starts_with('A') => CoefKind::Ar(s[1..].parse::<usize>().map_err(|_| err())? - 1),
            s if s.starts_with('M') => CoefKind::Ma(s[1..].parse::<usize>().map_err(|_| err())? - 1),
            _ => return Err(err()),
        };
        let r = ParamRef { block, kind, row, col };
        self.coef(&r)?;
        Ok(r)
    }
}

/// Spec-shaped convenience wrapper for one surrogate step.
pub fn surrogate_step(
    net: &mut SurrogateNet,
    lag2: Option<&SystemState>,
    lag1: &SystemState,
    u: &SurrogateInput,
    pumps: &PumpContext,
) -> Result<SystemState, SurrogateError> {
    let lag2 = lag2.ok_or(SurrogateError::MissingLag)?;
    net.step(lag2, lag1, u, pumps)
}

/// One training trajectory: aligned states and hourly-held power targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub targets: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn block_series(traj: &Trajectory, spec: &BlockSpec, norm: &Normalization) -> Series {
    let n = traj.len();
    let mut states = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);
    for k in 0..n {
        let sys = &traj.states[k];
        states.push(DVector::from_iterator(
            spec.vars.len(),
            spec.vars.iter().map(|v| norm.to_block(*v, sys[*v])),
        ));
        let u = SurrogateInput {
            t: sys[VarId::T],
            target_power: traj.targets[k],
        };
        let base = norm.input_pair(&u);
        let mut iv = DVector::zeros(spec.n_u());
        iv[0] = base[0];
        iv[1] = base[1];
        for (i, feed) in spec.feeds.iter().enumerate() {
            let Feed::Current(v) = feed;
            iv[2 + i] = norm.to_block(*v, sys[*v]);
        }
        inputs.push(iv);
    }
    Series { states, inputs }
}

fn fit_blocks(
    specs: &[BlockSpec],
    trajs_per_block: impl Fn(&BlockSpec) -> Vec<Series>,
    opts: &FitOptions,
) -> Result<(Vec<Block>, BTreeMap<String, FitReport>), SurrogateError> {
    let mut blocks = Vec::with_capacity(specs.len());
    let mut reports = BTreeMap::new();
    for spec in specs {
        let series = trajs_per_block(spec);
        let (params, report) = fit_varmax(&series, 2, 1, opts)?;
        reports.insert(spec.name.clone(), report);
        let n_x = params.n_x();
        blocks.push(Block {
            spec: spec.clone(),
            params,
            eps: vec![DVector::zeros(n_x)],
        });
    }
    Ok((blocks, reports))
}

/// Fit the original seven-block net on nominal load-follow trajectories.
pub fn fit_original_net(
    trajectories: &[Trajectory],
    consts: &PlantConstants,
    opts: &FitOptions,
) -> Result<(SurrogateNet, BTreeMap<String, FitReport>), SurrogateError> {
    if trajectories.is_empty() {
        return Err(SurrogateError::Coverage("no training trajectories".into()));
    }
    let reference = crate::plant::PlantState::commissioning(1.0, 1.0, 1.0, consts);
    let norm = Normalization::at_full_power(&reference.sys);
    let specs = original_block_specs();
    let mut fit_opts = opts.clone();
    fit_opts.zero_input_cols = vec![0];
    let (blocks, reports) = fit_blocks(
        &specs,
        |spec| {
            trajectories
                .iter()
                .map(|t| block_series(t, spec, &norm))
                .collect()
        },
        &fit_opts,
    )?;
    let mut net = SurrogateNet {
        variant: NetVariant::Original,
        blocks,
        normalization: norm,
        xenon: consts.xenon.clone(),
        pump: PumpPhysics::from_constants(consts),
        dt: 5.0,
    };
    net.validate_wiring()?;
    net.anchor_fixed_point(&reference.sys, FULL_POWER)?;
    Ok((net, reports))
}

/// Training corpus for the shock-adapted net.
#[derive(Debug, Clone)]
pub struct ShockTrainingSet {
    /// Trajectories containing SG boundary perturbations (blocks II..VI).
    pub with_shock: Vec<Trajectory>,
    /// Shock-free trajectories for block I (the measured flow is corrected by
    /// the filter online, so its predictor stays nominal).
    pub without_shock: Vec<Trajectory>,
}

/// Build the restructured shock-capturing net from a training corpus with
/// boundary perturbations up to the trained envelope and power moves across
/// the 60-100% band.
pub fn build_shock_surrogate(
    training: &ShockTrainingSet,
    consts: &PlantConstants,
    opts: &FitOptions,
) -> Result<(SurrogateNet, BTreeMap<String, FitReport>), SurrogateError> {
    if training.with_shock.is_empty() || training.without_shock.is_empty() {
        return Err(SurrogateError::Coverage(
            "need both shocked and nominal trajectories".into(),
        ));
    }
    let max_shock = training
        .with_shock
        .iter()
        .flat_map(|t| t.states.iter())
        .map(|s| (s[VarId::TIhxSIn] - SG_EXIT_TEMP).abs())
        .fold(0.0f64, f64::max);
    if max_shock < 2.0 {
        return Err(SurrogateError::Coverage(format!(
            "shock trajectories reach only {max_shock:.2} K of boundary perturbation"
        )));
    }
    let (lo, hi) = training
        .with_shock
        .iter()
        .flat_map(|t| t.targets.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(*p), hi.max(*p))
        });
    if lo > 0.65 * FULL_POWER || hi < 0.95 * FULL_POWER {
        return Err(SurrogateError::Coverage(format!(
            "power coverage [{:.0}%, {:.0}%] does not span the 60-100% band",
            100.0 * lo / FULL_POWER,
            100.0 * hi / FULL_POWER
        )));
    }

    let norm = Normalization::engineering_units();
    let specs = shock_block_specs();
    let mut fit_opts = opts.clone();
    fit_opts.zero_input_cols = vec![0];
    let (blocks, reports) = fit_blocks(
        &specs,
        |spec| {
            let corpus = if spec.name == "I" {
                &training.without_shock
            } else {
                &training.with_shock
            };
            corpus.iter().map(|t| block_series(t, spec, &norm)).collect()
        },
        &fit_opts,
    )?;
    let mut net = SurrogateNet {
        variant: NetVariant::Shock,
        blocks,
        normalization: norm,
        xenon: consts.xenon.clone(),
        pump: PumpPhysics::from_constants(consts),
        dt: 5.0,
    };
    net.validate_wiring()?;
    let anchor = crate::plant::PlantState::commissioning(0.79, 1.0, 1.0, consts);
    net.anchor_fixed_point(&anchor.sys, 0.79 * FULL_POWER)?;
    Ok((net, reports))
}

/// Versioned checkpoint wrapper.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub net: SurrogateNet,
    /// Labels of the assimilated parameter vector, in order.
    pub theta_a: Vec<String>,
    pub fit_reports: BTreeMap<String, FitReport>,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn new(net: SurrogateNet, theta_a: Vec<String>, fit_reports: BTreeMap<String, FitReport>) -> Self {
        Checkpoint {
            version: Self::VERSION,
            net,
            theta_a,
            fit_reports,
        }
    }

    pub fn to_json(&self) -> Result<String, SurrogateError> {
        serde_json::to_string(self).map_err(|e| SurrogateError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
        if ck.version != Self::VERSION {
            return Err(SurrogateError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        ck.net.validate_wiring()?;
        Ok(ck)
    }
}
