//! Discount-list specifications: `geometric:start,ratio,count` or a
//! comma-separated list of literals.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("bad discount list '{spec}': {reason}")]
pub struct LambdaSpecError {
    pub spec: String,
    pub reason: String,
}

pub fn parse_lambdas(spec: &str) -> Result<Vec<f64>, LambdaSpecError> {
    let fail = |reason: &str| LambdaSpecError {
        spec: spec.to_string(),
        reason: reason.to_string(),
    };
    let list = if let Some(rest) = spec.strip_prefix("geometric:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(fail("geometric form needs start,ratio,count"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| fail("bad start"))?;
        let ratio: f64 = parts[1].trim().parse().map_err(|_| fail("bad ratio"))?;
        let count: usize = parts[2].trim().parse().map_err(|_| fail("bad count"))?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(fail("ratio must be in (0, 1)"));
        }
        (0..count).map(|k| start * ratio.powi(k as i32)).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| fail("not a number list"))?
    };
    for l in &list {
        if !(*l > 0.0 && *l <= 1.0) {
            return Err(fail(&format!("discount {l} outside (0, 1]")));
        }
    }
    Ok(list)
}
