use crate::error::{Error, Result};

/// Concatenates `valmetrics.csv` texts of several runs into one long table
/// with a leading `run` column and a trailing `best` flag marking each run's
/// best validation check (first maximum of the metric column).
pub fn merge_valmetrics(runs: &[(String, String)]) -> Result<String> {
    let mut header: Option<&str> = None;
    let mut out = String::new();
    for (name, text) in runs {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let h = lines
            .next()
            .ok_or_else(|| Error::Config(format!("run `{name}` has an empty valmetrics table")))?;
        match header {
            None => {
                header = Some(h);
                out.push_str(&format!("run,{h},best\n"));
            }
            Some(prev) if prev != h => {
                return Err(Error::Config(format!(
                    "run `{name}` has columns `{h}`, expected `{prev}`"
                )))
            }
            Some(_) => {}
        }
        let rows: Vec<&str> = lines.collect();
        let metric = |row: &str| -> Result<f64> {
            row.split(',')
                .nth(2)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("run `{name}`: unreadable row `{row}`")))
        };
        let mut best = None;
        let mut best_v = f64::NEG_INFINITY;
        for (i, r) in rows.iter().enumerate() {
            let v = metric(r)?;
            if v > best_v {
                best_v = v;
                best = Some(i);
            }
        }
        for (i, r) in rows.iter().enumerate() {
            out.push_str(&format!("{name},{r},{}\n", u8::from(best == Some(i))));
        }
    }
    if header.is_none() {
        return Err(Error::Config("no runs to report".into()));
    }
    Ok(out)
}
