//! CSV artifacts. Floats are written with 17 significant digits so that
//! every value reads back bit-exactly.

use std::path::Path;

use crate::conjugate::{AlphaSet, ArgmaxRecord, SetIterRecord};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GridRef};
use crate::value_iteration::IterRecord;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// `index,point,mass`.
pub fn write_measure(path: impl AsRef<Path>, mu: &DiscreteMeasure) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["index", "point", "mass"])?;
    for (i, (x, m)) in mu.grid().points().iter().zip(mu.weights()).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*x), fmt_f64(*m)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `index,mass` or `index,point,mass` file; missing indices get 0.
pub fn read_measure(path: impl AsRef<Path>, grid: GridRef) -> Result<DiscreteMeasure> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ii, mi) = match (col("index"), col("mass")) {
        (Some(i), Some(m)) => (i, m),
        _ => {
            return Err(Error::InvalidModel(
                "belief csv needs 'index' and 'mass' columns".into(),
            ))
        }
    };
    let mut weights = vec![0.0; grid.len()];
    for rec in r.records() {
        let rec = rec?;
        let parse_err = |what: &str| Error::InvalidModel(format!("bad {what} in belief csv"));
        let i: usize = rec
            .get(ii)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err("index"))?;
        let m: f64 = rec
            .get(mi)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err("mass"))?;
        if i >= weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "belief index {i} outside grid of {}",
                weights.len()
            )));
        }
        weights[i] += m;
    }
    DiscreteMeasure::new(grid, weights)
}

/// `iter,sup_diff,bound`.
pub fn write_vi_convergence(path: impl AsRef<Path>, trace: &[IterRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["iter", "sup_diff", "bound"])?;
    for r in trace {
        w.write_record([r.iter.to_string(), fmt_f64(r.sup_diff), fmt_f64(r.bound)])?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,sup_diff,bound,set_size,lip_measured,lip_bound`.
pub fn write_set_convergence(path: impl AsRef<Path>, trace: &[SetIterRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["iter", "sup_diff", "bound", "set_size", "lip_measured", "lip_bound"])?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            fmt_f64(r.sup_diff),
            fmt_f64(r.bound),
            r.set_size.to_string(),
            fmt_f64(r.lip_measured),
            fmt_f64(r.lip_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `belief,value,action`.
pub fn write_values(
    path: impl AsRef<Path>,
    values: &[f64],
    actions: &[usize],
    action_names: &[String],
) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["belief", "value", "action"])?;
    for (i, (v, a)) in values.iter().zip(actions).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*v), action_names[*a].clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// `fn,action,grid_point,value,lip_const`; the action column is empty for
/// untagged members.
pub fn write_alphas(path: impl AsRef<Path>, set: &AlphaSet, action_names: &[String]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["fn", "action", "grid_point", "value", "lip_const"])?;
    for (i, (f, a)) in set.fns().iter().zip(set.actions()).enumerate() {
        let action = a.map(|a| action_names[a].clone()).unwrap_or_default();
        let lip = fmt_f64(f.lip_const());
        for (x, v) in set.grid().points().iter().zip(f.values()) {
            w.write_record([i.to_string(), action.clone(), fmt_f64(*x), fmt_f64(*v), lip.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `belief,fn,action`.
pub fn write_argmax_trace(
    path: impl AsRef<Path>,
    trace: &[ArgmaxRecord],
    action_names: &[String],
) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["belief", "fn", "action"])?;
    for r in trace {
        w.write_record([
            r.belief.to_string(),
            r.function.to_string(),
            r.action.map(|a| action_names[a].clone()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::StateGrid;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1.7976931348623157e308, 5e-324, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn measure_round_trip() {
        let dir = std::env::temp_dir().join(format!("wbpomdp-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mu.csv");
        let grid = StateGrid::euclidean_1d(vec![-1.0, 0.0, 2.0]).unwrap();
        let mu = DiscreteMeasure::new(grid.clone(), vec![0.1, 0.2, 0.7]).unwrap();
        write_measure(&path, &mu).unwrap();
        let back = read_measure(&path, grid).unwrap();
        assert_eq!(back.weights(), mu.weights());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
