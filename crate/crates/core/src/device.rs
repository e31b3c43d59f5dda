//! Single-memristor state machine and wear accounting.
//!
//! A cell is an ideal binary switch: 1 is the closed (low resistance) state,
//! 0 the open state. Material implication `q <- !p | q` is the only logic
//! primitive; `clear` forces a cell open.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Voltage applied to a single device line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Voltage {
    Zero,
    /// Read voltage. Never changes state.
    Cond,
    /// Conditional set, used on the implication target.
    Set,
    /// Unconditional reset to 0.
    Clear,
}

/// What counts as a write cycle in the endurance ledger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WearPolicy {
    /// Only applications that flip the state wear the device.
    #[default]
    CountTransitions,
    /// Every `Set` or `Clear` application wears the device.
    CountApplications,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnduranceConfig {
    pub endurance_limit: f64,
    pub wear_policy: WearPolicy,
}

impl Default for EnduranceConfig {
    fn default() -> Self {
        Self {
            endurance_limit: 1e10,
            wear_policy: WearPolicy::CountTransitions,
        }
    }
}

impl EnduranceConfig {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.endurance_limit.is_finite() && self.endurance_limit > 0.0 {
            Ok(())
        } else {
            Err(DeviceError::BadEndurance(self.endurance_limit))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("implication source and target are the same device ({0})")]
    SameDevice(usize),
    #[error("device index {index} out of range ({len} devices)")]
    OutOfRange { index: usize, len: usize },
    #[error("endurance limit must be positive and finite, got {0}")]
    BadEndurance(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MemristorCell {
    value: bool,
    write_count: u64,
}

impl MemristorCell {
    pub fn new(value: bool) -> Self {
        Self {
            value,
            write_count: 0,
        }
    }

    pub fn value(&self) -> bool {
        self.value
    }

    pub fn write_count(&self) -> u64 {
        self.write_count
    }

    /// Non-destructive observation.
    pub fn read(&self) -> bool {
        self.value
    }

    /// Apply a line voltage. `cond` is the state of the implication source
    /// when `v` is `Set`; it is ignored otherwise.
    pub fn apply(&mut self, v: Voltage, cond: bool, policy: WearPolicy) {
        let next = match v {
            Voltage::Zero | Voltage::Cond => return,
            Voltage::Set => !cond || self.value,
            Voltage::Clear => false,
        };
        let flipped = next != self.value;
        self.value = next;
        if flipped || policy == WearPolicy::CountApplications {
            self.write_count += 1;
        }
    }

    pub fn clear(&mut self, policy: WearPolicy) {
        self.apply(Voltage::Clear, false, policy);
    }
}

/// `q' = !p | q`. Returns the new target; `p` is untouched.
pub fn imply(p: &MemristorCell, q: &MemristorCell, policy: WearPolicy) -> MemristorCell {
    let mut out = *q;
    out.apply(Voltage::Set, p.value, policy);
    out
}

/// Returns the cleared cell.
pub fn clear(m: &MemristorCell, policy: WearPolicy) -> MemristorCell {
    let mut out = *m;
    out.clear(policy);
    out
}

pub fn read(m: &MemristorCell) -> bool {
    m.read()
}

/// Implication between two devices of a bank, addressed by index.
pub fn imply_at(
    cells: &mut [MemristorCell],
    p: usize,
    q: usize,
    policy: WearPolicy,
) -> Result<(), DeviceError> {
    let len = cells.len();
    for index in [p, q] {
        if index >= len {
            return Err(DeviceError::OutOfRange { index, len });
        }
    }
    if p == q {
        return Err(DeviceError::SameDevice(p));
    }
    let src = cells[p];
    cells[q] = imply(&src, &cells[q], policy);
    Ok(())
}
