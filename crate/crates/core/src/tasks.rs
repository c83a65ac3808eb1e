use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{RadarGeometry, SystemPreset, TASK1_SYSTEM, TASK2_SYSTEM, TASK3_SYSTEM};
use crate::regularizers::{BetaScale, CognitionKind, CognitionSpec};
use crate::solver::SolverParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    ScatteringDiagnosis,
    PersonScreen,
    ParcelScreen,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [
        TaskId::ScatteringDiagnosis,
        TaskId::PersonScreen,
        TaskId::ParcelScreen,
    ];

    pub fn system(self) -> SystemPreset {
        match self {
            TaskId::ScatteringDiagnosis => TASK1_SYSTEM,
            TaskId::PersonScreen => TASK2_SYSTEM,
            TaskId::ParcelScreen => TASK3_SYSTEM,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TaskId::ScatteringDiagnosis => 1,
            TaskId::PersonScreen => 2,
            TaskId::ParcelScreen => 3,
        }
    }

    pub fn from_number(n: u64) -> Result<Self, Error> {
        match n {
            1 => Ok(TaskId::ScatteringDiagnosis),
            2 => Ok(TaskId::PersonScreen),
            3 => Ok(TaskId::ParcelScreen),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TaskId::ScatteringDiagnosis => "scattering_diagnosis",
            TaskId::PersonScreen => "person_screen",
            TaskId::ParcelScreen => "parcel_screen",
        };
        f.write_str(name)
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "1" | "scattering_diagnosis" => Ok(TaskId::ScatteringDiagnosis),
            "2" | "person_screen" => Ok(TaskId::PersonScreen),
            "3" | "parcel_screen" => Ok(TaskId::ParcelScreen),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// Default image grid for every task.
pub const DEFAULT_GRID: (usize, usize, usize) = (32, 32, 64);

/// A task's regularizer wiring and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPreset {
    pub task: TaskId,
    pub cognitions: Vec<CognitionSpec>,
    pub component_count: usize,
    /// Component returned as the task image.
    pub output_component: usize,
    pub geometry_default: RadarGeometry,
    /// SNR the task's phantom echo is simulated at.
    pub snr_db: f64,
    /// ADMM penalty. Small penalties let the ℓp support flip between
    /// iterates and make the objective oscillate on the convex presets.
    pub gamma: f64,
}

impl TaskPreset {
    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            gamma: self.gamma,
            component_count: self.component_count,
            ..SolverParams::default()
        }
    }
}

fn spec(kind: CognitionKind, beta: f64, component: usize, scale: BetaScale) -> CognitionSpec {
    CognitionSpec::new(kind, beta, component).with_scale(scale)
}

pub fn task_preset(task: TaskId) -> TaskPreset {
    use BetaScale::{Absolute, Peak, SigmaMax};
    use CognitionKind::*;
    let (nx, ny, nr) = DEFAULT_GRID;
    let geometry_default =
        RadarGeometry::from_preset(&task.system(), nx, ny, nr).expect("built-in presets are valid");
    let (cognitions, component_count, snr_db, gamma) = match task {
        TaskId::ScatteringDiagnosis => (
            vec![
                spec(Lp, 0.01, 0, Peak).with_p(0.5),
                spec(L2, 0.01, 0, Absolute),
            ],
            1,
            20.0,
            2.0,
        ),
        TaskId::PersonScreen => (
            vec![
                spec(L1, SPARSE_BETA, 0, Peak),
                spec(TransformL1, 0.2, 0, Peak),
            ],
            1,
            10.0,
            6.0,
        ),
        TaskId::ParcelScreen => (
            vec![
                spec(L1, SPARSE_BETA, 0, Peak),
                spec(TransformL1, 0.2, 0, Peak),
                spec(Nuclear, 0.3, 1, SigmaMax),
            ],
            2,
            10.0,
            2.0,
        ),
    };
    TaskPreset {
        task,
        cognitions,
        component_count,
        output_component: 0,
        geometry_default,
        snr_db,
        gamma,
    }
}

/// Weight of the ℓ1 term, relative to the matched-filter peak, shared by the
/// sparsity-only baseline and the screening presets.
pub const SPARSE_BETA: f64 = 0.1;

/// The sparsity-only baseline: one ℓ1 term on a single component, solved
/// with default solver parameters. For the screening tasks this is the
/// preset with every other term removed.
pub fn sparse_cognitions(_task: TaskId) -> Vec<CognitionSpec> {
    vec![spec(CognitionKind::L1, SPARSE_BETA, 0, BetaScale::Peak)]
}
