//! Experiment plans: registered algorithms, run specifications and bound
//! constants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gen::TopologySource;
use crate::CliError;

/// Every measurable algorithm, by plan id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    WheelWrite,
    WheelRead,
    CombineWheel,
    CombineModular,
    CombineFat,
    CombineGeneric,
    /// Wheel or fat-links CloudCast, chosen by the topology.
    Cloudcast,
    Quickest,
    Fedsum,
}

impl Algo {
    pub const ALL: [Algo; 9] = [
        Algo::WheelWrite,
        Algo::WheelRead,
        Algo::CombineWheel,
        Algo::CombineModular,
        Algo::CombineFat,
        Algo::CombineGeneric,
        Algo::Cloudcast,
        Algo::Quickest,
        Algo::Fedsum,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algo::WheelWrite => "wheel-write",
            Algo::WheelRead => "wheel-read",
            Algo::CombineWheel => "combine-wheel",
            Algo::CombineModular => "combine-modular",
            Algo::CombineFat => "combine-fat",
            Algo::CombineGeneric => "combine-generic",
            Algo::Cloudcast => "cloudcast",
            Algo::Quickest => "quickest",
            Algo::Fedsum => "fedsum",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algo {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Algo::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| CliError::PlanInvalid(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuickestMode {
    /// One node writes.
    #[default]
    Write,
    /// One node reads.
    Read,
    /// Every node writes its own file.
    Caw,
    /// Every node reads its own file.
    Car,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverKind {
    All,
    #[default]
    Sparse,
}

fn one() -> u32 {
    1
}

fn xor() -> String {
    "xor".into()
}

/// One line of a plan. `repetitions` runs use seeds `seed, seed + 1, ...`;
/// each repetition draws its topology (when random) and inputs from its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algo: Algo,
    pub topology: TopologySource,
    /// Payload size in bits; operators of fixed size ignore it.
    #[serde(default)]
    pub s: u64,
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default = "xor")]
    pub op: String,
    /// Single-node operations act on this node, or on every node if unset.
    #[serde(default)]
    pub node: Option<usize>,
    #[serde(default)]
    pub kappa: Option<u32>,
    #[serde(default)]
    pub grain: Option<usize>,
    #[serde(default)]
    pub cover: CoverKind,
    #[serde(default)]
    pub collective: bool,
    #[serde(default)]
    pub mode: QuickestMode,
    /// Federated sum: modulus and vector length.
    #[serde(default)]
    pub modulus: Option<u64>,
    #[serde(default)]
    pub m: Option<usize>,
}

impl RunSpec {
    pub fn new(algo: Algo, topology: TopologySource, s: u64, seed: u64) -> Self {
        RunSpec {
            algo,
            topology,
            s,
            seed,
            repetitions: 1,
            op: xor(),
            node: None,
            kappa: None,
            grain: None,
            cover: CoverKind::default(),
            collective: false,
            mode: QuickestMode::default(),
            modulus: None,
            m: None,
        }
    }
}

/// Multipliers of the analytic bounds, and switches for the two checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConstants {
    pub check_upper: bool,
    pub check_lower: bool,
    /// Single-node wheel write/read: `c * Z_i`.
    pub wheel_op: f64,
    /// Holistic wheel combining: `c * Z_max * ceil(log n)`.
    pub wheel_combine: f64,
    /// Pipelined combining and federated sum:
    /// `c * (Z_max + |I_max|*ceil(g/phi) + ceil(g/b_c)*ceil(log n))`.
    pub modular: f64,
    /// Fat-links combining: `c * Z_max * ceil(log n)^2`.
    pub fat_combine: f64,
    /// Wheel CloudCast: `c * Z_max`.
    pub cloudcast_wheel: f64,
    /// Fat-links CloudCast: `c * Z_max * ceil(log n)^2`.
    pub cloudcast_fat: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            check_upper: true,
            check_lower: true,
            wheel_op: 8.0,
            wheel_combine: 16.0,
            modular: 16.0,
            fat_combine: 32.0,
            cloudcast_wheel: 8.0,
            cloudcast_fat: 32.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub bounds: BoundConstants,
    /// Output path prefix: `<output>.csv` and `<output>.json`.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let plan: ExperimentPlan = serde_json::from_str(text).map_err(|e| CliError::PlanInvalid(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (k, r) in self.runs.iter().enumerate() {
            if r.repetitions == 0 {
                return Err(CliError::PlanInvalid(format!("run {k}: repetitions must be positive")));
            }
            if r.topology.n() == 0 {
                return Err(CliError::PlanInvalid(format!("run {k}: empty topology")));
            }
        }
        Ok(())
    }

    /// Replaces every run's seed, as the seed environment override does.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for r in &mut self.runs {
            r.seed = seed;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.id().parse::<Algo>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.id()));
        }
        assert!("warp".parse::<Algo>().is_err());
    }

    #[test]
    fn plans_parse_and_reject() {
        let ok = r#"{"runs": [{"algo": "wheel-write", "s": 8, "seed": 1,
            "topology": {"mode": "wheel", "n": 4, "cloud_bw": 1, "local_bw": 4}}]}"#;
        let p = ExperimentPlan::from_json(ok).unwrap();
        assert_eq!(p.runs[0].repetitions, 1);
        assert_eq!(p.bounds, BoundConstants::default());
        let bad = ok.replace("wheel-write", "teleport");
        assert!(matches!(ExperimentPlan::from_json(&bad), Err(CliError::PlanInvalid(_))));
        let no_seed = ok.replace("\"seed\": 1,", "");
        assert!(ExperimentPlan::from_json(&no_seed).is_err());
        assert!(ExperimentPlan::from_json(r#"{"runs": []}"#).unwrap().runs.is_empty());
    }
}
