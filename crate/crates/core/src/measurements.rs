//! Measured flows and pressures, unit handling, and mass-balance accounting.
//!
//! Everything inside the crate is CGS: pressure in dyn/cm², flow in cm³/s,
//! resistance in dyn·s/cm⁵. mmHg only appears in files and reports.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// dyn/cm² per mmHg.
pub const MMHG_TO_DYN_CM2: f64 = 1333.22;

/// Fraction of the ascending-aorta flow that leaves through the coronaries.
pub const CORONARY_FRACTION: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureUnit {
    MmHg,
    DynPerCm2,
}

impl FromStr for PressureUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mmHg" | "mmhg" => Ok(PressureUnit::MmHg),
            "dyn/cm2" | "dyn/cm^2" | "dyn/cm²" | "dyn_cm2" => Ok(PressureUnit::DynPerCm2),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl PressureUnit {
    fn to_cgs_factor(self) -> f64 {
        match self {
            PressureUnit::MmHg => MMHG_TO_DYN_CM2,
            PressureUnit::DynPerCm2 => 1.0,
        }
    }
}

pub fn convert_pressure(value: f64, from: PressureUnit, to: PressureUnit) -> f64 {
    if from == to {
        return value;
    }
    value * from.to_cgs_factor() / to.to_cgs_factor()
}

/// String-token form of [`convert_pressure`], as used by the CLI.
pub fn convert_pressure_str(value: f64, from: &str, to: &str) -> Result<f64> {
    Ok(convert_pressure(value, from.parse()?, to.parse()?))
}

/// Cuff pressures in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressurePair {
    pub systolic: f64,
    pub diastolic: f64,
}

impl PressurePair {
    pub fn new(systolic: f64, diastolic: f64) -> Result<Self> {
        let pp = Self {
            systolic,
            diastolic,
        };
        pp.validate()?;
        Ok(pp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diastolic.is_finite() && self.systolic.is_finite()) || self.diastolic <= 0.0 {
            return Err(Error::validation(
                "pressure.diastolic_mmHg",
                format!("must be positive and finite, got {}", self.diastolic),
            ));
        }
        if self.systolic < self.diastolic {
            return Err(Error::validation(
                "pressure.systolic_mmHg",
                format!(
                    "systolic {} is below diastolic {}",
                    self.systolic, self.diastolic
                ),
            ));
        }
        Ok(())
    }
}

/// Mean arterial pressure (mmHg) from a cuff reading.
pub fn mean_arterial_pressure(pp: PressurePair) -> Result<f64> {
    pp.validate()?;
    Ok((pp.systolic + 2.0 * pp.diastolic) / 3.0)
}

/// Removes the coronary share from a flow measured in the ascending aorta.
pub fn correct_inlet_flow(q_ascending: f64) -> Result<f64> {
    if !(q_ascending > 0.0) || !q_ascending.is_finite() {
        return Err(Error::validation(
            "inlet.flow_cm3_s",
            format!("must be positive, got {q_ascending}"),
        ));
    }
    Ok((1.0 - CORONARY_FRACTION) * q_ascending)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutletMeasurement {
    pub tag: i64,
    /// cm³/s
    pub flow: f64,
    pub weight: f64,
}

/// The data every calibrator tries to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub inlet_tag: i64,
    /// cm³/s, after any coronary correction
    pub inlet_flow: f64,
    pub outlets: Vec<OutletMeasurement>,
    /// dyn/cm²
    pub target_pressure: f64,
    pub pressure_patch_tag: i64,
    pub pressure_weight: f64,
    pub inlet_weight: f64,
}

impl MeasurementSet {
    /// Unit-weight measurement set with the pressure assimilated on the inlet patch.
    pub fn new(inlet_tag: i64, inlet_flow: f64, outlets: &[(i64, f64)], target_pressure: f64) -> Result<Self> {
        let ms = Self {
            inlet_tag,
            inlet_flow,
            outlets: outlets
                .iter()
                .map(|&(tag, flow)| OutletMeasurement {
                    tag,
                    flow,
                    weight: 1.0,
                })
                .collect(),
            target_pressure,
            pressure_patch_tag: inlet_tag,
            pressure_weight: 1.0,
            inlet_weight: 1.0,
        };
        ms.validate()?;
        Ok(ms)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inlet_flow > 0.0 && self.inlet_flow.is_finite()) {
            return Err(Error::validation(
                "inlet.flow_cm3_s",
                format!("must be positive, got {}", self.inlet_flow),
            ));
        }
        if self.outlets.is_empty() {
            return Err(Error::validation("outlets", "at least one outlet is required"));
        }
        for (i, o) in self.outlets.iter().enumerate() {
            if !(o.flow > 0.0 && o.flow.is_finite()) {
                return Err(Error::validation(
                    format!("outlets[{i}].flow_cm3_s"),
                    format!("must be positive, got {}", o.flow),
                ));
            }
            if !(o.weight >= 0.0 && o.weight.is_finite()) {
                return Err(Error::validation(
                    format!("outlets[{i}].weight"),
                    format!("must be finite and >= 0, got {}", o.weight),
                ));
            }
            if self.outlets[..i].iter().any(|p| p.tag == o.tag) {
                return Err(Error::validation(
                    format!("outlets[{i}].tag"),
                    format!("duplicate outlet tag {}", o.tag),
                ));
            }
        }
        if !(self.target_pressure > 0.0 && self.target_pressure.is_finite()) {
            return Err(Error::validation(
                "pressure",
                format!("must be positive, got {} dyn/cm2", self.target_pressure),
            ));
        }
        for (name, w) in [
            ("weights.pressure", self.pressure_weight),
            ("weights.inlet", self.inlet_weight),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::validation(name, format!("must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }

    pub fn outlet_tags(&self) -> Vec<i64> {
        self.outlets.iter().map(|o| o.tag).collect()
    }

    pub fn outlet_flows(&self) -> Vec<f64> {
        self.outlets.iter().map(|o| o.flow).collect()
    }

    pub fn outlet_weights(&self) -> Vec<f64> {
        self.outlets.iter().map(|o| o.weight).collect()
    }

    /// Checks that the outlets appear in exactly the given order.
    pub fn check_outlet_tags(&self, mesh_outlets: &[i64]) -> Result<()> {
        let tags = self.outlet_tags();
        if tags != mesh_outlets {
            return Err(Error::validation(
                "outlets",
                format!("measurement outlet tags {tags:?} do not match mesh outlet tags {mesh_outlets:?}"),
            ));
        }
        Ok(())
    }

    /// Same data with every weight multiplied by `s`.
    pub fn scaled_weights(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.pressure_weight *= s;
        out.inlet_weight *= s;
        for o in &mut out.outlets {
            o.weight *= s;
        }
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MeasurementFile = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        file.into_measurements()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeasurementFile::from(self))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MeasurementSet::from_json_str(&text)
}

/// Mass-balance summary of a measurement set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetFlowReport {
    pub inlet_total: f64,
    pub outlet_total: f64,
    pub net_flow: f64,
    pub violation_fraction: f64,
}

impl NetFlowReport {
    pub fn violation_percent(&self) -> f64 {
        100.0 * self.violation_fraction
    }
}

pub fn net_flow_report(ms: &MeasurementSet) -> NetFlowReport {
    net_flow_from_totals(ms.inlet_flow, ms.outlets.iter().map(|o| o.flow).sum())
}

pub(crate) fn net_flow_from_totals(inlet_total: f64, outlet_total: f64) -> NetFlowReport {
    let net_flow = inlet_total - outlet_total;
    NetFlowReport {
        inlet_total,
        outlet_total,
        net_flow,
        violation_fraction: net_flow.abs() / inlet_total,
    }
}

// On-disk schema.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PressureSpec {
    Pair {
        #[serde(rename = "systolic_mmHg")]
        systolic: f64,
        #[serde(rename = "diastolic_mmHg")]
        diastolic: f64,
    },
    Mean {
        #[serde(rename = "mean_mmHg")]
        mean: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InletSpec {
    tag: i64,
    flow_cm3_s: f64,
    #[serde(default)]
    apply_coronary_correction: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutletSpec {
    tag: i64,
    flow_cm3_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pressure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inlet: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementFile {
    pressure: PressureSpec,
    inlet: InletSpec,
    outlets: Vec<OutletSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pressure_patch_tag: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<WeightsSpec>,
}

impl MeasurementFile {
    fn into_measurements(self) -> Result<MeasurementSet> {
        let p_mmhg = match self.pressure {
            PressureSpec::Pair {
                systolic,
                diastolic,
            } => mean_arterial_pressure(PressurePair {
                systolic,
                diastolic,
            })?,
            PressureSpec::Mean { mean } => mean,
        };
        if !(p_mmhg > 0.0) {
            return Err(Error::validation(
                "pressure.mean_mmHg",
                format!("must be positive, got {p_mmhg}"),
            ));
        }
        if !(self.inlet.flow_cm3_s > 0.0) {
            return Err(Error::validation(
                "inlet.flow_cm3_s",
                format!("must be positive, got {}", self.inlet.flow_cm3_s),
            ));
        }
        let inlet_flow = if self.inlet.apply_coronary_correction {
            correct_inlet_flow(self.inlet.flow_cm3_s)?
        } else {
            self.inlet.flow_cm3_s
        };
        let weights = self.weights.unwrap_or_default();
        let ms = MeasurementSet {
            inlet_tag: self.inlet.tag,
            inlet_flow,
            outlets: self
                .outlets
                .into_iter()
                .map(|o| OutletMeasurement {
                    tag: o.tag,
                    flow: o.flow_cm3_s,
                    weight: o.weight.unwrap_or(1.0),
                })
                .collect(),
            target_pressure: convert_pressure(p_mmhg, PressureUnit::MmHg, PressureUnit::DynPerCm2),
            pressure_patch_tag: self.pressure_patch_tag.unwrap_or(self.inlet.tag),
            pressure_weight: weights.pressure.unwrap_or(1.0),
            inlet_weight: weights.inlet.unwrap_or(1.0),
        };
        ms.validate()?;
        Ok(ms)
    }
}

impl From<&MeasurementSet> for MeasurementFile {
    fn from(ms: &MeasurementSet) -> Self {
        MeasurementFile {
            pressure: PressureSpec::Mean {
                mean: convert_pressure(ms.target_pressure, PressureUnit::DynPerCm2, PressureUnit::MmHg),
            },
            inlet: InletSpec {
                tag: ms.inlet_tag,
                flow_cm3_s: ms.inlet_flow,
                apply_coronary_correction: false,
            },
            outlets: ms
                .outlets
                .iter()
                .map(|o| OutletSpec {
                    tag: o.tag,
                    flow_cm3_s: o.flow,
                    weight: Some(o.weight),
                })
                .collect(),
            pressure_patch_tag: Some(ms.pressure_patch_tag),
            weights: Some(WeightsSpec {
                pressure: Some(ms.pressure_weight),
                inlet: Some(ms.inlet_weight),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn map_examples() {
        assert_eq!(mean_arterial_pressure(PressurePair::new(100.0, 100.0).unwrap()).unwrap(), 100.0);
        let m = mean_arterial_pressure(PressurePair::new(120.0, 80.0).unwrap()).unwrap();
        assert!(close(m, 280.0 / 3.0, 1e-15));
        assert!(close(mean_arterial_pressure(PressurePair::new(90.0, 60.0).unwrap()).unwrap(), 70.0, 1e-15));
    }

    #[test]
    fn map_rejects_bad_pairs() {
        assert!(PressurePair::new(80.0, 120.0).is_err());
        assert!(PressurePair::new(80.0, 0.0).is_err());
        assert!(mean_arterial_pressure(PressurePair {
            systolic: 70.0,
            diastolic: 80.0
        })
        .is_err());
    }

    #[test]
    fn pressure_conversion() {
        assert_eq!(convert_pressure(1.0, PressureUnit::MmHg, PressureUnit::DynPerCm2), 1333.22);
        assert_eq!(convert_pressure(0.0, PressureUnit::MmHg, PressureUnit::DynPerCm2), 0.0);
        assert!(convert_pressure_str(1.0, "mmHg", "psi").is_err());
        assert_eq!(convert_pressure_str(2.0, "mmHg", "dyn/cm2").unwrap(), 2666.44);
    }

    #[test]
    fn coronary_correction() {
        assert!(close(correct_inlet_flow(100.0).unwrap(), 96.0, 1e-15));
        assert!((correct_inlet_flow(124.06).unwrap() - 119.10).abs() < 0.01);
        let once = correct_inlet_flow(100.0).unwrap();
        let twice = correct_inlet_flow(once).unwrap();
        assert!(twice != once);
        assert!(correct_inlet_flow(0.0).is_err());
        assert!(correct_inlet_flow(-3.0).is_err());
    }

    #[test]
    fn net_flow_consistent_data_is_zero() {
        let ms = MeasurementSet::new(1, 10.0, &[(2, 4.0), (3, 6.0)], 1.0e5).unwrap();
        let r = net_flow_report(&ms);
        assert_eq!(r.net_flow, 0.0);
        assert_eq!(r.violation_fraction, 0.0);
    }

    const MINIMAL: &str = r#"{
        "pressure": {"systolic_mmHg": 120, "diastolic_mmHg": 80},
        "inlet": {"tag": 1, "flow_cm3_s": 100.0},
        "outlets": [
            {"tag": 3, "flow_cm3_s": 20.0},
            {"tag": 4, "flow_cm3_s": 10.0},
            {"tag": 5, "flow_cm3_s": 10.0},
            {"tag": 6, "flow_cm3_s": 60.0}
        ]
    }"#;

    #[test]
    fn load_minimal_file_fills_default_weights() {
        let ms = MeasurementSet::from_json_str(MINIMAL).unwrap();
        assert_eq!(ms.outlets.len(), 4);
        assert!(ms.outlets.iter().all(|o| o.weight == 1.0));
        assert_eq!(ms.pressure_weight, 1.0);
        assert_eq!(ms.inlet_weight, 1.0);
        assert_eq!(ms.pressure_patch_tag, 1);
        assert!(close(ms.target_pressure, 280.0 / 3.0 * 1333.22, 1e-14));
    }

    #[test]
    fn negative_flow_names_the_field() {
        let bad = MINIMAL.replace("\"flow_cm3_s\": 10.0},\n            {\"tag\": 5", "\"flow_cm3_s\": -10.0},\n            {\"tag\": 5");
        let err = MeasurementSet::from_json_str(&bad).unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "outlets[1].flow_cm3_s"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = MeasurementSet::from_json_str("{\n\"pressure\": ,\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn mean_pressure_file_is_stored_in_cgs() {
        let text = r#"{"pressure": {"mean_mmHg": 105}, "inlet": {"tag": 1, "flow_cm3_s": 107.0},
            "outlets": [{"tag": 2, "flow_cm3_s": 13.2}, {"tag": 3, "flow_cm3_s": 6.71},
                        {"tag": 4, "flow_cm3_s": 7.47}, {"tag": 5, "flow_cm3_s": 79.8}]}"#;
        let ms = MeasurementSet::from_json_str(text).unwrap();
        assert!((ms.target_pressure - 139_988.1).abs() < 1e-6);
    }

    #[test]
    fn coronary_flag_is_applied_on_load() {
        let text = r#"{"pressure": {"mean_mmHg": 100}, "inlet": {"tag": 1, "flow_cm3_s": 100.0, "apply_coronary_correction": true},
            "outlets": [{"tag": 2, "flow_cm3_s": 96.0}]}"#;
        let ms = MeasurementSet::from_json_str(text).unwrap();
        assert!(close(ms.inlet_flow, 96.0, 1e-15));
    }

    #[test]
    fn mesh_tag_cross_check() {
        let ms = MeasurementSet::from_json_str(MINIMAL).unwrap();
        assert!(ms.check_outlet_tags(&[3, 4, 5, 6]).is_ok());
        assert!(ms.check_outlet_tags(&[3, 4, 6, 5]).is_err());
    }

    proptest! {
        #[test]
        fn map_is_bounded_and_monotone(d in 1.0f64..150.0, extra in 0.0f64..100.0, bump in 0.0f64..10.0) {
            let s = d + extra;
            let m = mean_arterial_pressure(PressurePair { systolic: s, diastolic: d }).unwrap();
            prop_assert!(m >= d - 1e-12 && m <= s + 1e-12);
            let ms = mean_arterial_pressure(PressurePair { systolic: s + bump, diastolic: d }).unwrap();
            let md = mean_arterial_pressure(PressurePair { systolic: s + bump, diastolic: d + bump.min(extra) }).unwrap();
            prop_assert!(ms >= m && md >= ms);
        }

        #[test]
        fn conversion_round_trip(x in -1.0e6f64..1.0e6) {
            let y = convert_pressure(convert_pressure(x, PressureUnit::MmHg, PressureUnit::DynPerCm2),
                                     PressureUnit::DynPerCm2, PressureUnit::MmHg);
            prop_assert!((y - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }

        #[test]
        fn violation_is_zero_iff_balanced(qs in proptest::collection::vec(0.1f64..50.0, 1..6), delta in -5.0f64..5.0) {
            let total: f64 = qs.iter().sum();
            let outlets: Vec<(i64, f64)> = qs.iter().enumerate().map(|(i, &q)| (i as i64 + 2, q)).collect();
            let inlet = total + delta;
            prop_assume!(inlet > 0.0);
            let ms = MeasurementSet::new(1, inlet, &outlets, 1.0e5).unwrap();
            let r = net_flow_report(&ms);
            prop_assert_eq!(r.net_flow, r.inlet_total - r.outlet_total);
            prop_assert_eq!(r.violation_fraction == 0.0, ms.inlet_flow == r.outlet_total);
        }

        #[test]
        fn file_round_trip(qs in proptest::collection::vec(0.1f64..50.0, 1..6), q0 in 1.0f64..200.0,
                           p in 50.0f64..150.0, w in 0.0f64..3.0) {
            let outlets: Vec<(i64, f64)> = qs.iter().enumerate().map(|(i, &q)| (10 + i as i64, q)).collect();
            let mut ms = MeasurementSet::new(7, q0, &outlets, p * MMHG_TO_DYN_CM2).unwrap();
            ms.pressure_weight = w;
            ms.outlets[0].weight = w + 1.0;
            let back = MeasurementSet::from_json_str(&ms.to_json_string().unwrap()).unwrap();
            prop_assert!((back.target_pressure - ms.target_pressure).abs() <= 1e-14 * ms.target_pressure);
            let mut a = back.clone();
            a.target_pressure = ms.target_pressure;
            prop_assert_eq!(a, ms);
        }
    }
}
