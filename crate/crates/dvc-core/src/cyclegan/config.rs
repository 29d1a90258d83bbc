//! Training configuration and the registry of named model variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LrSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CycleNorm {
    L1,
    L2,
}

/// All ablation toggles and hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub cycle_norm: CycleNorm,
    pub two_step: bool,
    pub use_dtw: bool,
    pub fif_da: bool,
    pub ts_input: bool,
    pub lambda_cycle: f64,
    pub lambda_id: f64,
    /// Identity loss is dropped from the objective at this iteration.
    pub id_zero_after: usize,
    pub segment_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub n_mels: usize,
    /// Hidden channel width of the desk-scale networks.
    pub hidden: usize,
    pub checkpoint_interval: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            cycle_norm: CycleNorm::L1,
            two_step: false,
            use_dtw: false,
            fif_da: false,
            ts_input: false,
            lambda_cycle: 10.0,
            lambda_id: 5.0,
            id_zero_after: 10_000,
            segment_len: 128,
            batch_size: 1,
            epochs: 1000,
            schedule: LrSchedule::default(),
            seed: 17,
            n_mels: 80,
            hidden: 32,
            checkpoint_interval: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 4 {
            return Err(Error::Config(format!(
                "segment_len must be >= 4, got {}",
                self.segment_len
            )));
        }
        if self.segment_len % 4 != 0 {
            return Err(Error::Config(format!(
                "segment_len must be divisible by 4 for the strided networks, got {}",
                self.segment_len
            )));
        }
        if self.lambda_cycle < 0.0 || self.lambda_id < 0.0 {
            return Err(Error::Config("lambdas must be >= 0".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "batch_size is fixed at 1, got {}",
                self.batch_size
            )));
        }
        if self.n_mels == 0 || self.hidden == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "n_mels, hidden and epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Divide the paper-scale iteration milestones and epoch count by
    /// `scale` for desk-scale runs; toggles and rates are untouched.
    pub fn scaled(&self, scale: usize) -> GanConfig {
        let s = scale.max(1);
        GanConfig {
            id_zero_after: (self.id_zero_after / s).max(1),
            epochs: (self.epochs / s).max(1),
            schedule: self.schedule.scaled(s),
            ..self.clone()
        }
    }

    /// Generator input channel count (the FIF mask rides along as one
    /// extra conditioning channel).
    pub fn gen_in_channels(&self) -> usize {
        self.n_mels + usize::from(self.fif_da)
    }
}

/// The named model variants compared in the ablation, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    CycleGanVc,
    DiscoGan,
    CycleGanVcDtw,
    CycleGanVc2Step,
    CycleGanVcDtw2Step,
    MaskCycleGanVc,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::CycleGanVc,
        Variant::DiscoGan,
        Variant::CycleGanVcDtw,
        Variant::CycleGanVc2Step,
        Variant::CycleGanVcDtw2Step,
        Variant::MaskCycleGanVc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::CycleGanVc => "cyclegan-vc",
            Variant::DiscoGan => "discogan",
            Variant::CycleGanVcDtw => "cyclegan-vc-dtw",
            Variant::CycleGanVc2Step => "cyclegan-vc-2step",
            Variant::CycleGanVcDtw2Step => "cyclegan-vc-dtw-2step",
            Variant::MaskCycleGanVc => "maskcyclegan-vc",
        }
    }

    pub fn from_name(name: &str) -> Result<Variant> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{name}'; valid: {}",
                    Variant::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }

    /// The variant's configuration: toggles per the comparison matrix, the
    /// shared hyperparameters elsewhere.
    pub fn config(&self) -> GanConfig {
        let base = GanConfig::default();
        match self {
            Variant::CycleGanVc => base,
            // L2 cycle norm plus a parallel-data DTW setup.
            Variant::DiscoGan => GanConfig {
                cycle_norm: CycleNorm::L2,
                use_dtw: true,
                ..base
            },
            Variant::CycleGanVcDtw => GanConfig {
                use_dtw: true,
                ..base
            },
            Variant::CycleGanVc2Step => GanConfig {
                two_step: true,
                ..base
            },
            Variant::CycleGanVcDtw2Step => GanConfig {
                use_dtw: true,
                two_step: true,
                ..base
            },
            // Two-step loss, FIF augmentation, 64-frame segments, 300
            // epochs, and the earlier decay start.
            Variant::MaskCycleGanVc => GanConfig {
                two_step: true,
                fif_da: true,
                segment_len: 64,
                epochs: 300,
                schedule: LrSchedule {
                    decay_start: 10_000,
                    ..LrSchedule::default()
                },
                ..base
            },
        }
    }
}
