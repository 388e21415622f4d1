//! Native AGC: a window-comparator loop that walks the gain code during the
//! preamble and freezes at sync.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rxsim::{wideband_dbm, GainIndex, GainTable, LinkBudget, PacketScenario, Phase};

/// Post-gain power window the loop tries to reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgcConfig {
    pub target_low_dbm: f64,
    pub target_high_dbm: f64,
}

impl Default for AgcConfig {
    fn default() -> Self {
        AgcConfig { target_low_dbm: -20.0, target_high_dbm: -12.0 }
    }
}

impl AgcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_low_dbm < self.target_high_dbm) {
            return Err(Error::Config(format!(
                "AGC target window ({}, {}) must have low < high",
                self.target_low_dbm, self.target_high_dbm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgcState {
    current_index: GainIndex,
    frozen: bool,
    upper_limit: GainIndex,
    step_count: u32,
    target_window_dbm: (f64, f64),
}

impl AgcState {
    /// State at receiver warm-up: the upper limit is both the cap and the
    /// starting code.
    pub fn warm_up(upper_limit: GainIndex, table: &GainTable, cfg: &AgcConfig) -> Result<Self> {
        table.index(upper_limit.0)?;
        cfg.validate()?;
        Ok(AgcState {
            current_index: upper_limit,
            frozen: false,
            upper_limit,
            step_count: 0,
            target_window_dbm: (cfg.target_low_dbm, cfg.target_high_dbm),
        })
    }

    pub fn current_index(&self) -> GainIndex {
        self.current_index
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn upper_limit(&self) -> GainIndex {
        self.upper_limit
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn target_window_dbm(&self) -> (f64, f64) {
        self.target_window_dbm
    }

    pub fn freeze(self) -> Self {
        AgcState { frozen: true, ..self }
    }

    /// Back to the warm-up state, optionally with a new upper limit.
    pub fn reset(self, upper_limit: GainIndex) -> Self {
        AgcState { current_index: upper_limit, frozen: false, upper_limit, step_count: 0, ..self }
    }
}

/// One comparator decision on a measured wideband power.
pub fn agc_step(state: &AgcState, measured_wideband_dbm: f64, table: &GainTable) -> Result<AgcState> {
    if state.frozen {
        return Err(Error::Contract("AGC stepped after freeze".into()));
    }
    let (low, high) = state.target_window_dbm;
    let post_gain = measured_wideband_dbm + table.gain_db(state.current_index);
    let i = state.current_index.0;
    let next = if post_gain > high {
        i.saturating_sub(1)
    } else if post_gain < low {
        (i + 1).min(state.upper_limit.0)
    } else {
        i
    };
    Ok(AgcState { current_index: GainIndex(next), step_count: state.step_count + 1, ..*state })
}

/// Iterate the loop on a static input until it stops moving, then freeze.
///
/// Tables whose steps are wider than the target window can cycle; the loop is
/// cut after `4 * G` steps and freezes wherever it stands.
pub fn converge(mut state: AgcState, measured_wideband_dbm: f64, table: &GainTable) -> Result<AgcState> {
    let budget = 4 * table.len();
    for _ in 0..budget {
        let next = agc_step(&state, measured_wideband_dbm, table)?;
        let settled = next.current_index == state.current_index;
        state = next;
        if settled {
            return Ok(state.freeze());
        }
    }
    log::warn!("AGC did not settle within {budget} steps at {measured_wideband_dbm:.1} dBm");
    Ok(state.freeze())
}

/// Run the native AGC over the preamble of `scn` and return the frozen code.
///
/// The detector sees the interferer only when it arrives before the freeze.
/// `upper_limit` is clamped into the table.
pub fn run_preamble_agc(
    scn: &PacketScenario,
    upper_limit: GainIndex,
    table: &GainTable,
    budget: &LinkBudget,
    cfg: &AgcConfig,
) -> GainIndex {
    let limit = table.clamp(upper_limit.0);
    let measured = wideband_dbm(scn, Phase::Preamble, budget);
    let state = AgcState::warm_up(limit, table, cfg).expect("clamped limit and validated config");
    converge(state, measured, table).expect("fresh state is not frozen").current_index()
}
