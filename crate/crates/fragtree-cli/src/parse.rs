//! Parsing of measure specs, horizons, and offspring distributions from
//! command-line strings or JSON files.

use fragtree::dislocation::DislocationMeasure;
use fragtree::fragmentation::Horizon;
use fragtree::gw::OffspringDistribution;
use std::collections::HashMap;
use std::fs;

/// Builtin measure spec (`binary:a=0.5`, `uniformN:N=2,probs=0.25|0|0.75`,
/// `nu1`, `nu2`) or `@file.json` holding a measure spec document.
pub fn parse_measure(spec: &str) -> Result<DislocationMeasure, String> {
    if let Some(path) = spec.strip_prefix('@') {
        let text =
            fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("{path}: invalid JSON: {e}"))?;
        return DislocationMeasure::from_spec_json(&value).map_err(|e| format!("{path}: {e}"));
    }
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n, parse_args(a)?),
        None => (spec, HashMap::new()),
    };
    match name {
        "binary" => {
            let a = float_arg(&args, "a")?.unwrap_or(0.5);
            DislocationMeasure::binary(a).map_err(|e| e.to_string())
        }
        "uniformN" => {
            let n = float_arg(&args, "N")?
                .ok_or("uniformN needs N=<pieces>".to_string())? as usize;
            let probs: Vec<f64> = args
                .get("probs")
                .ok_or("uniformN needs probs=<w0|w1|…>".to_string())?
                .split('|')
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| format!("bad probability {p:?}"))
                })
                .collect::<Result<_, _>>()?;
            DislocationMeasure::uniform_split(n, &probs).map_err(|e| e.to_string())
        }
        "nu1" => Ok(DislocationMeasure::nu1()),
        "nu2" => Ok(DislocationMeasure::nu2()),
        other => Err(format!(
            "unknown measure {other:?} (expected binary, uniformN, nu1, nu2, or @file.json)"
        )),
    }
}

/// `time:<t>` or `until-dead:<mass floor>`.
pub fn parse_horizon(spec: &str) -> Result<Horizon, String> {
    let (kind, value) = spec
        .split_once(':')
        .ok_or_else(|| format!("horizon {spec:?} must be time:<t> or until-dead:<floor>"))?;
    let x: f64 = value
        .parse()
        .map_err(|_| format!("bad horizon value {value:?}"))?;
    match kind {
        "time" => Ok(Horizon::Time(x)),
        "until-dead" => Ok(Horizon::UntilDead { mass_floor: x }),
        other => Err(format!("unknown horizon kind {other:?}")),
    }
}

/// Offspring law from `p0,p1,p2,…` plus a separate mass at infinity.
pub fn parse_offspring(probs: &str, p_inf: f64) -> Result<OffspringDistribution, String> {
    let probs: Vec<f64> = probs
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad probability {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    OffspringDistribution::new(probs, p_inf).map_err(|e| e.to_string())
}

/// Comma-separated positive integers, e.g. `--caps 2,3,4,6,8`.
pub fn parse_usize_list(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad integer {p:?}"))
        })
        .collect()
}

fn parse_args(args: &str) -> Result<HashMap<String, String>, String> {
    let mut map = HashMap::new();
    for piece in args.split(',') {
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| format!("measure argument {piece:?} must be key=value"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn float_arg(args: &HashMap<String, String>, key: &str) -> Result<Option<f64>, String> {
    args.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| format!("bad value for {key}: {v:?}")))
        .transpose()
}
