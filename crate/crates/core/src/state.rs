//! The 42-entry plant/surrogate system state vector and its variable ids.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

/// Number of system state variables.
pub const N_VARS: usize = 42;

/// Identifier for one system state variable.
///
/// The discriminant is the canonical storage index of the variable inside a
/// [`SystemState`]. CSV emission orders columns alphabetically by id name
/// after the leading time column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(usize)]
pub enum VarId {
    /// Time [s]
    T = 0,
    /// Iodine-135 concentration [dk/k]
    NI = 1,
    /// Xenon-135 concentration [dk/k]
    NXe = 2,
    /// Core inlet temperature [K]
    TCIn = 3,
    /// Core outlet temperature [K]
    TCOut = 4,
    /// Core inlet pressure [Pa]
    PCIn = 5,
    /// Core outlet pressure [Pa]
    PCOut = 6,
    /// IHX primary inlet temperature [K]
    TIhxPIn = 7,
    /// IHX primary outlet temperature [K]
    TIhxPOut = 8,
    /// IHX primary inlet pressure [Pa]
    PIhxPIn = 9,
    /// IHX primary outlet pressure [Pa]
    PIhxPOut = 10,
    /// IHX secondary inlet temperature [K]
    TIhxSIn = 11,
    /// IHX secondary outlet temperature [K]
    TIhxSOut = 12,
    /// IHX secondary inlet pressure [Pa]
    PIhxSIn = 13,
    /// IHX secondary outlet pressure [Pa]
    PIhxSOut = 14,
    /// SG inlet temperature [K]
    TSgIn = 15,
    /// SG outlet temperature [K]
    TSgOut = 16,
    /// SG inlet pressure [Pa]
    PSgIn = 17,
    /// SG outlet pressure [Pa]
    PSgOut = 18,
    /// Core flow [kg/s]
    MDotC = 19,
    /// Secondary flow [kg/s]
    MDotS = 20,
    /// SG flow [kg/s]
    MDotSg = 21,
    /// Reactor core power [W]
    QDotRx = 22,
    /// IHX heat extraction power [W]
    QDotHx = 23,
    /// SG heat extraction power [W]
    QDotSg = 24,
    /// Delayed neutron precursor group 1 [power-equivalent]
    C1 = 25,
    C2 = 26,
    C3 = 27,
    C4 = 28,
    C5 = 29,
    C6 = 30,
    /// Moderator reactivity [dk/k]
    RhoM = 31,
    /// Coolant reactivity [dk/k]
    RhoC = 32,
    /// Fuel reactivity [dk/k]
    RhoF = 33,
    /// Control-rod reactivity insertion [dk/k]
    RhoCr = 34,
    /// Control rod position [m]
    ZCr = 35,
    /// Primary pump flow [kg/s]
    MDotPP = 36,
    /// Secondary pump flow [kg/s]
    MDotPS = 37,
    /// Primary pump speed [RPM]
    NP = 38,
    /// Secondary pump speed [RPM]
    NS = 39,
    /// Primary pump head [Pa]
    DpP = 40,
    /// Secondary pump head [Pa]
    DpS = 41,
}

impl VarId {
    /// All ids in canonical storage order.
    pub const ALL: [VarId; N_VARS] = [
        VarId::T,
        VarId::NI,
        VarId::NXe,
        VarId::TCIn,
        VarId::TCOut,
        VarId::PCIn,
        VarId::PCOut,
        VarId::TIhxPIn,
        VarId::TIhxPOut,
        VarId::PIhxPIn,
        VarId::PIhxPOut,
        VarId::TIhxSIn,
        VarId::TIhxSOut,
        VarId::PIhxSIn,
        VarId::PIhxSOut,
        VarId::TSgIn,
        VarId::TSgOut,
        VarId::PSgIn,
        VarId::PSgOut,
        VarId::MDotC,
        VarId::MDotS,
        VarId::MDotSg,
        VarId::QDotRx,
        VarId::QDotHx,
        VarId::QDotSg,
        VarId::C1,
        VarId::C2,
        VarId::C3,
        VarId::C4,
        VarId::C5,
        VarId::C6,
        VarId::RhoM,
        VarId::RhoC,
        VarId::RhoF,
        VarId::RhoCr,
        VarId::ZCr,
        VarId::MDotPP,
        VarId::MDotPS,
        VarId::NP,
        VarId::NS,
        VarId::DpP,
        VarId::DpS,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical textual id, used in CSV headers, configs, and logs.
    pub fn name(self) -> &'static str {
        match self {
            VarId::T => "t",
            VarId::NI => "n_i",
            VarId::NXe => "n_xe",
            VarId::TCIn => "t_c_in",
            VarId::TCOut => "t_c_out",
            VarId::PCIn => "p_c_in",
            VarId::PCOut => "p_c_out",
            VarId::TIhxPIn => "t_ihx_p_in",
            VarId::TIhxPOut => "t_ihx_p_out",
            VarId::PIhxPIn => "p_ihx_p_in",
            VarId::PIhxPOut => "p_ihx_p_out",
            VarId::TIhxSIn => "t_ihx_s_in",
            VarId::TIhxSOut => "t_ihx_s_out",
            VarId::PIhxSIn => "p_ihx_s_in",
            VarId::PIhxSOut => "p_ihx_s_out",
            VarId::TSgIn => "t_sg_in",
            VarId::TSgOut => "t_sg_out",
            VarId::PSgIn => "p_sg_in",
            VarId::PSgOut => "p_sg_out",
            VarId::MDotC => "m_dot_c",
            VarId::MDotS => "m_dot_s",
            VarId::MDotSg => "m_dot_sg",
            VarId::QDotRx => "q_dot_rx",
            VarId::QDotHx => "q_dot_hx",
            VarId::QDotSg => "q_dot_sg",
            VarId::C1 => "c1",
            VarId::C2 => "c2",
            VarId::C3 => "c3",
            VarId::C4 => "c4",
            VarId::C5 => "c5",
            VarId::C6 => "c6",
            VarId::RhoM => "rho_m",
            VarId::RhoC => "rho_c",
            VarId::RhoF => "rho_f",
            VarId::RhoCr => "rho_cr",
            VarId::ZCr => "z_cr",
            VarId::MDotPP => "m_dot_p_p",
            VarId::MDotPS => "m_dot_p_s",
            VarId::NP => "n_p",
            VarId::NS => "n_s",
            VarId::DpP => "dp_p",
            VarId::DpS => "dp_s",
        }
    }

    pub fn from_name(name: &str) -> Option<VarId> {
        VarId::ALL.iter().copied().find(|v| v.name() == name)
    }

    /// Ids other than time, sorted alphabetically by name. This is the fixed
    /// CSV column order after the leading time column.
    pub fn csv_order() -> Vec<VarId> {
        let mut ids: Vec<VarId> = VarId::ALL
            .iter()
            .copied()
            .filter(|v| *v != VarId::T)
            .collect();
        ids.sort_by_key(|v| v.name());
        ids
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 42-entry system state vector (Table of plant/surrogate observables).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState(pub [f64; N_VARS]);

impl Serialize for SystemState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SystemState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        let arr: [f64; N_VARS] = v
            .try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"42 entries"))?;
        Ok(SystemState(arr))
    }
}

impl SystemState {
    pub fn zeros() -> Self {
        SystemState([0.0; N_VARS])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn time(&self) -> f64 {
        self[VarId::T]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Index<VarId> for SystemState {
    type Output = f64;
    fn index(&self, id: VarId) -> &f64 {
        &self.0[id.index()]
    }
}

impl IndexMut<VarId> for SystemState {
    fn index_mut(&mut self, id: VarId) -> &mut f64 {
        &mut self.0[id.index()]
    }
}
