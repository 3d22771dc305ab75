use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use outflow_core::baselines::SimplexOptions;
use outflow_core::fem::FluidProps;
use outflow_core::ocp::{ControlMode, OcpConfig};
use outflow_core::transient::{FlowModel, TransientConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Ocp,
    OcpInlet,
    Murray,
    Ohm,
    OhmOpt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ocp => "ocp",
            Method::OcpInlet => "ocp-inlet",
            Method::Murray => "murray",
            Method::Ohm => "ohm",
            Method::OhmOpt => "ohm-opt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    #[default]
    Forward,
    Lumped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Stokes,
    NavierStokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesizeOptions {
    pub from: Source,
    /// boundary tag where the pressure is read; the inlet when absent
    pub pressure_tag: Option<i64>,
    /// relative amplitude of uniform noise on every measured value
    pub noise: f64,
}

impl Default for SynthesizeOptions {
    fn default() -> Self {
        Self {
            from: Source::Forward,
            pressure_tag: None,
            noise: 0.0,
        }
    }
}

/// Everything a run depends on. Written next to the outputs so that a run
/// can be repeated with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    /// tag map JSON; `<mesh stem>_tags.json` next to the mesh when absent
    pub tags: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub method: Method,
    pub fluid: FluidProps,
    pub ocp: OcpConfig,
    pub simplex: SimplexOptions,
    pub murray_exponent: f64,
    pub transient: TransientConfig,
    /// `t_s,Q_cm3_s` samples of one cycle; the half-sine template otherwise
    pub waveform: Option<PathBuf>,
    /// seconds, for the template waveform
    pub period: f64,
    /// cm³/s; taken from the measurements when absent
    pub inlet_flow: Option<f64>,
    /// dyn·s/cm⁵ in mesh outlet order
    pub resistances: Option<Vec<f64>>,
    /// a calibrate `result.json` to take the resistances from
    pub resistances_from: Option<PathBuf>,
    pub synthesize: SynthesizeOptions,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            tags: None,
            measurements: None,
            method: Method::Ocp,
            fluid: FluidProps::default(),
            ocp: OcpConfig::default(),
            simplex: SimplexOptions::default(),
            murray_exponent: 2.0,
            transient: TransientConfig::default(),
            waveform: None,
            period: 1.0,
            inlet_flow: None,
            resistances: None,
            resistances_from: None,
            synthesize: SynthesizeOptions::default(),
            seed: 0,
            threads: 1,
            out: PathBuf::from("out"),
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// print the resolved configuration and exit
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Gmsh 2.2 ASCII mesh
    #[arg(long, global = true)]
    pub mesh: Option<PathBuf>,
    /// tag map JSON: {"inlet": 1, "walls": [2], "outlets": [3, 4]}
    #[arg(long, global = true)]
    pub tags: Option<PathBuf>,
    /// measurement JSON
    #[arg(long, global = true)]
    pub measurements: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// time step in seconds
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub cycles: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// outlet resistances in mesh outlet order, comma separated
    #[arg(long = "R", global = true, value_delimiter = ',', num_args = 1..)]
    pub resistances: Option<Vec<f64>>,
    /// take the resistances from a calibrate result.json
    #[arg(long, global = true)]
    pub from_result: Option<PathBuf>,
    /// inlet waveform CSV
    #[arg(long, global = true)]
    pub waveform: Option<PathBuf>,
    /// cycle length of the template waveform, seconds
    #[arg(long, global = true)]
    pub period: Option<f64>,
    /// mean inlet flow, cm³/s
    #[arg(long, global = true)]
    pub inlet_flow: Option<f64>,
    /// synthesize: model that generates the data
    #[arg(long, global = true, value_enum)]
    pub from: Option<Source>,
    /// synthesize: boundary tag where the pressure is read
    #[arg(long, global = true)]
    pub pressure_tag: Option<i64>,
    /// synthesize: relative noise amplitude
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let f = flags.clone();
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(f.mesh.map(Some) => cfg.mesh);
        set!(f.tags.map(Some) => cfg.tags);
        set!(f.measurements.map(Some) => cfg.measurements);
        set!(f.method => cfg.method);
        set!(f.out => cfg.out);
        set!(f.dt => cfg.transient.dt);
        set!(f.cycles => cfg.transient.n_cycles);
        set!(f.model.map(|m| match m {
            ModelArg::Stokes => FlowModel::Stokes,
            ModelArg::NavierStokes => FlowModel::NavierStokes,
        }) => cfg.transient.model);
        set!(f.threads => cfg.threads);
        set!(f.resistances.map(Some) => cfg.resistances);
        set!(f.from_result.map(Some) => cfg.resistances_from);
        set!(f.waveform.map(Some) => cfg.waveform);
        set!(f.period => cfg.period);
        set!(f.inlet_flow.map(Some) => cfg.inlet_flow);
        set!(f.from => cfg.synthesize.from);
        set!(f.pressure_tag.map(Some) => cfg.synthesize.pressure_tag);
        set!(f.noise => cfg.synthesize.noise);
        set!(f.seed => cfg.seed);
        cfg.ocp.mode = match cfg.method {
            Method::OcpInlet => ControlMode::OutletsAndInlet,
            _ => ControlMode::Outlets,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        self.fluid.validate()?;
        self.ocp.validate()?;
        self.simplex.validate()?;
        self.transient.validate()?;
        if !pos(self.murray_exponent) {
            return Err(CliError::validation("murray_exponent must be positive"));
        }
        if !pos(self.period) {
            return Err(CliError::validation("period must be positive"));
        }
        if self.threads == 0 {
            return Err(CliError::validation("threads must be at least 1"));
        }
        if let Some(q) = self.inlet_flow {
            if !pos(q) {
                return Err(CliError::validation(format!("inlet flow must be positive, got {q}")));
            }
        }
        if let Some(r) = &self.resistances {
            if let Some(x) = r.iter().find(|x| !pos(**x)) {
                return Err(CliError::validation(format!("resistances must be positive, got {x}")));
            }
        }
        if !(self.synthesize.noise >= 0.0 && self.synthesize.noise < 1.0) {
            return Err(CliError::validation("noise must lie in [0, 1)"));
        }
        for p in [&self.mesh, &self.tags, &self.measurements, &self.waveform, &self.resistances_from]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(CliError::validation(format!("no such file: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Files whose content the run depends on.
    pub fn inputs(&self) -> Vec<PathBuf> {
        [&self.mesh, &self.tag_path(), &self.measurements, &self.waveform, &self.resistances_from]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    pub fn tag_path(&self) -> Option<PathBuf> {
        if self.tags.is_some() {
            return self.tags.clone();
        }
        let mesh = self.mesh.as_ref()?;
        let stem = mesh.file_stem()?.to_string_lossy();
        let p = mesh.with_file_name(format!("{stem}_tags.json"));
        p.is_file().then_some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"method": "ohm", "threads": 3, "transient": {"dt": 0.001}}"#).unwrap();
        let flags = Flags {
            config: Some(path.clone()),
            threads: Some(2),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.method, Method::Ohm);
        assert_eq!(cfg.threads, 2);
        assert_eq!(cfg.transient.dt, 0.001);
        assert_eq!(cfg.transient.n_cycles, TransientConfig::default().n_cycles);
        assert_eq!(cfg.ocp.mode, ControlMode::Outlets);
    }

    #[test]
    fn resolved_config_round_trips() {
        let flags = Flags {
            method: Some(Method::OcpInlet),
            resistances: Some(vec![1.0, 2.0]),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.ocp.mode, ControlMode::OutletsAndInlet);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_values_are_rejected() {
        let cases = [
            Flags {
                threads: Some(0),
                ..Default::default()
            },
            Flags {
                resistances: Some(vec![1.0, -2.0]),
                ..Default::default()
            },
            Flags {
                dt: Some(0.0),
                ..Default::default()
            },
            Flags {
                mesh: Some("/nonexistent/mesh.msh".into()),
                ..Default::default()
            },
        ];
        for f in cases {
            assert!(matches!(RunConfig::resolve(&f), Err(CliError::Validation(_))), "{f:?}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"methd": "ohm"}"#).unwrap();
        let f = Flags {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&f), Err(CliError::Validation(_))));
    }
}
