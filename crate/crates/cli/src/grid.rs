use anyhow::{bail, Context, Result};

/// Parses `start:step:end` into `start, start + step, ...` up to `end`.
/// A bare number is a one-point grid.
pub fn parse(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad grid value {p:?} in {spec:?}")))
        .collect::<Result<_>>()?;
    let (start, step, end) = match parts[..] {
        [v] => return Ok(vec![v]),
        [start, step, end] => (start, step, end),
        _ => bail!("grid must be start:step:end, got {spec:?}"),
    };
    if !(start.is_finite() && end.is_finite() && step.is_finite()) || step <= 0.0 || end < start {
        bail!("grid {spec:?} needs a positive step and end >= start");
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}
