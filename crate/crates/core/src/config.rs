//! Flat `key=value` configuration text with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{QuoptError, Result};
use crate::interferometer::{NoiseModel, ScanConfig, TransmissionExponent};

pub type KeyValues = BTreeMap<String, String>;

/// Parses `key=value` lines; blank lines and `#` comments are ignored, and a
/// later duplicate key overrides an earlier one.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| QuoptError::Format(format!("line {}: expected key=value, got '{raw}'", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(QuoptError::Format(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| QuoptError::Format(format!("invalid value '{value}' for {key}")))
}

/// Scan configuration as ordered key/value pairs. Floats use the shortest
/// representation that parses back to the same bits.
pub fn scan_config_pairs(cfg: &ScanConfig) -> Vec<(&'static str, String)> {
    let read_sigma = match cfg.noise {
        NoiseModel::PoissonGaussian { read_sigma } => read_sigma,
        _ => 0.0,
    };
    vec![
        ("lambda_pump_nm", format!("{:?}", cfg.lambda_pump_nm)),
        ("lambda_signal_nm", format!("{:?}", cfg.lambda_signal_nm)),
        ("lambda_idler_nm", format!("{:?}", cfg.lambda_idler_nm)),
        ("n_steps", cfg.n_steps.to_string()),
        ("step_size_um", format!("{:?}", cfg.step_size_um)),
        ("fringe_period_um", format!("{:?}", cfg.fringe_period_um)),
        ("v_sys", format!("{:?}", cfg.v_sys)),
        ("n0", format!("{:?}", cfg.n0)),
        ("transmission_exponent", cfg.transmission_exponent.to_string()),
        ("noise", cfg.noise.to_string()),
        ("read_sigma", format!("{read_sigma:?}")),
        ("seed", cfg.seed.to_string()),
    ]
}

/// Applies and removes every scan-config key found in `pairs`; other keys
/// are left for the caller.
pub fn apply_scan_pairs(cfg: &mut ScanConfig, pairs: &mut KeyValues) -> Result<()> {
    let mut take = |key: &str| pairs.remove(key).map(|v| (key.to_string(), v));
    if let Some((k, v)) = take("lambda_pump_nm") {
        cfg.lambda_pump_nm = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("lambda_signal_nm") {
        cfg.lambda_signal_nm = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("lambda_idler_nm") {
        cfg.lambda_idler_nm = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("n_steps") {
        cfg.n_steps = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("step_size_um") {
        cfg.step_size_um = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("fringe_period_um") {
        cfg.fringe_period_um = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("v_sys") {
        cfg.v_sys = parse_value(&k, &v)?;
    }
    if let Some((k, v)) = take("n0") {
        cfg.n0 = parse_value(&k, &v)?;
    }
    if let Some((_, v)) = take("transmission_exponent") {
        cfg.transmission_exponent = TransmissionExponent::from_str(&v)?;
    }
    if let Some((k, v)) = take("seed") {
        cfg.seed = parse_value(&k, &v)?;
    }
    let read_sigma = match take("read_sigma") {
        Some((k, v)) => Some(parse_value::<f64>(&k, &v)?),
        None => None,
    };
    if let Some((_, v)) = take("noise") {
        cfg.noise = parse_noise(&v, read_sigma.unwrap_or(0.0))?;
    } else if let (Some(s), NoiseModel::PoissonGaussian { read_sigma }) = (read_sigma, &mut cfg.noise) {
        *read_sigma = s;
    }
    Ok(())
}

pub fn parse_noise(name: &str, read_sigma: f64) -> Result<NoiseModel> {
    match name {
        "none" => Ok(NoiseModel::None),
        "poisson" => Ok(NoiseModel::Poisson),
        "poisson+gaussian" => Ok(NoiseModel::PoissonGaussian { read_sigma }),
        _ => Err(QuoptError::Format(format!("unknown noise model '{name}'"))),
    }
}

/// Builds a scan config from pairs that must all be scan-config keys.
pub fn scan_config_from_pairs(pairs: &KeyValues) -> Result<ScanConfig> {
    let mut rest = pairs.clone();
    let mut cfg = ScanConfig::default();
    apply_scan_pairs(&mut cfg, &mut rest)?;
    if let Some(k) = rest.keys().next() {
        return Err(QuoptError::Format(format!("unknown scan config key '{k}'")));
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_overrides() {
        let text = "# scan\nn_steps = 48\n\nv_sys=0.25 # trailing\nn_steps=64\n";
        let kv = parse_key_values(text).unwrap();
        assert_eq!(kv["n_steps"], "64");
        assert_eq!(kv["v_sys"], "0.25");
        assert_eq!(kv.len(), 2);
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse_key_values("just words").is_err());
        assert!(parse_key_values("=3").is_err());
    }

    #[test]
    fn scan_config_round_trips_through_text() {
        let cfg = ScanConfig {
            noise: NoiseModel::PoissonGaussian { read_sigma: 2.5 },
            transmission_exponent: TransmissionExponent::Intensity,
            seed: 77,
            v_sys: 0.1 + 0.2,
            ..ScanConfig::with_periods(48, 0.1, 6.0)
        };
        let text: String = scan_config_pairs(&cfg).iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let back = scan_config_from_pairs(&parse_key_values(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let kv = parse_key_values("colour=blue").unwrap();
        assert!(scan_config_from_pairs(&kv).is_err());
        let kv = parse_key_values("n_steps=many").unwrap();
        assert!(scan_config_from_pairs(&kv).is_err());
        let kv = parse_key_values("noise=pink").unwrap();
        assert!(scan_config_from_pairs(&kv).is_err());
        let kv = parse_key_values("n_steps=4").unwrap();
        assert!(scan_config_from_pairs(&kv).is_err());
    }
}
