//! Plot-ready long-format merge: every per-mode report CSV flattened into
//! one table with columns mode,source,x,series,value. Values are copied
//! verbatim so the merge never reformats a number.

use std::fmt::Write as _;
use std::path::Path;

use fens_core::rng::AblationMode;
use fens_core::{Error, Result};

pub const REPORT_FILE: &str = "report.csv";

fn read_if_present(out_dir: &Path, name: &str) -> Option<String> {
    std::fs::read_to_string(out_dir.join(name)).ok()
}

/// Wide table: one row per x value, one series per remaining column.
fn push_wide(rows: &mut String, mode: &str, source: &str, text: &str, x_col: Option<usize>) {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return;
    };
    let columns: Vec<&str> = header.split(',').collect();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let x = x_col.and_then(|i| cells.get(i).copied()).unwrap_or("");
        for (j, cell) in cells.iter().enumerate() {
            if Some(j) == x_col || j >= columns.len() {
                continue;
            }
            let _ = writeln!(rows, "{mode},{source},{x},{},{cell}", columns[j]);
        }
    }
}

/// Key-value table: first column names the series, second holds the value.
fn push_key_value(rows: &mut String, mode: &str, source: &str, text: &str) {
    for line in text.lines().skip(1) {
        let mut cells = line.split(',');
        let (Some(series), Some(value)) = (cells.next(), cells.next()) else {
            continue;
        };
        let _ = writeln!(rows, "{mode},{source},,{series},{value}");
    }
}

/// Sweep table: severity, kind, and group fold into the series name; size
/// is the x axis.
fn push_sweep(rows: &mut String, mode: &str, text: &str) {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return;
    };
    let columns: Vec<&str> = header.split(',').collect();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() || cells.len() < 5 {
            continue;
        }
        let (severity, kind, size, group) = (cells[0], cells[1], cells[2], cells[3]);
        for j in 4..cells.len() {
            let _ = writeln!(
                rows,
                "{mode},severity_sweep,{size},sev{severity}:{kind}:{group}:{},{}",
                columns[j], cells[j]
            );
        }
    }
}

/// Merge whatever per-mode reports exist on disk. At least one source
/// file must be present.
pub fn merge_reports(out_dir: &Path, modes: &[AblationMode]) -> Result<String> {
    let mut rows = String::from("mode,source,x,series,value\n");
    let mut found = false;
    for mode in modes {
        let name = mode.name();
        if let Some(text) = read_if_present(out_dir, &format!("size_curve_{name}.csv")) {
            push_wide(&mut rows, name, "size_curve", &text, Some(0));
            found = true;
        }
        if let Some(text) = read_if_present(out_dir, &format!("acc_difference_{name}.csv")) {
            push_wide(&mut rows, name, "acc_difference", &text, Some(0));
            found = true;
        }
        if let Some(text) = read_if_present(out_dir, &format!("group_report_{name}.csv")) {
            push_wide(&mut rows, name, "group_report", &text, None);
            found = true;
        }
        if let Some(text) = read_if_present(out_dir, &format!("diversity_{name}.csv")) {
            push_key_value(&mut rows, name, "diversity", &text);
            found = true;
        }
        if let Some(text) = read_if_present(out_dir, &format!("severity_sweep_{name}.csv")) {
            push_sweep(&mut rows, name, &text);
            found = true;
        }
    }
    if !found {
        return Err(Error::Data(format!(
            "no report files found under {}; run ensemble or metrics first",
            out_dir.display()
        )));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("fens-report-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn merge_flattens_each_source_family() {
        let dir = temp_dir("merge");
        std::fs::write(
            dir.join("size_curve_init.csv"),
            "size,mean_acc,group_top_mean\n1,0.5,0.75\n2,0.625,0.8\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("diversity_init.csv"),
            "metric,value\nmean_pairwise_churn,0.125\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("severity_sweep_init.csv"),
            "severity,kind,size,group,mean_acc,std_acc,relative_gain\n\
             0,clean,1,overall,0.5,0.01,1\n",
        )
        .unwrap();
        let merged = merge_reports(&dir, &[AblationMode::Init]).unwrap();
        assert!(merged.starts_with("mode,source,x,series,value\n"));
        assert!(merged.contains("init,size_curve,2,group_top_mean,0.8\n"), "{merged}");
        assert!(merged.contains("init,diversity,,mean_pairwise_churn,0.125\n"));
        assert!(merged.contains("init,severity_sweep,1,sev0:clean:overall:mean_acc,0.5\n"));
        // 2 sizes x 2 series + 1 metric + 1 sweep row x 3 measures + header.
        assert_eq!(merged.lines().count(), 1 + 4 + 1 + 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_is_a_data_error() {
        let dir = temp_dir("empty");
        let err = merge_reports(&dir, &[AblationMode::AllSources]).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
