//! Rendering of evaluation cells as CSV and markdown.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::config::FrrMode;
use crate::pipeline::Cell;

/// `0.002` becomes `0p002`.
pub fn far_label(far_pct: f64) -> String {
    format!("{far_pct}").replace('.', "p").replace('-', "m")
}

fn fmt_pct(v: f64) -> String {
    format!("{v:.3}")
}

fn far_list(cells: &[Cell]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for c in cells {
        for f in &c.frr {
            if !out.contains(&f.far_pct) {
                out.push(f.far_pct);
            }
        }
    }
    out
}

pub fn csv_header(cells: &[Cell], mode: FrrMode) -> Vec<String> {
    let mut h: Vec<String> = ["gaze_seconds", "images", "method", "eer_pct"].map(String::from).to_vec();
    for far in far_list(cells) {
        let l = far_label(far);
        if mode != FrrMode::Interpolated {
            h.push(format!("frr_at_{l}_pct"));
        }
        if mode != FrrMode::Conservative {
            h.push(format!("frr_interp_at_{l}_pct"));
        }
    }
    h.extend(["n_genuine", "n_impostor", "fido_pass"].map(String::from));
    h
}

pub fn csv_rows(cells: &[Cell], mode: FrrMode) -> Vec<Vec<String>> {
    let fars = far_list(cells);
    cells
        .iter()
        .map(|c| {
            let mut row = vec![
                format!("{}", c.gaze_seconds),
                c.images.to_string(),
                c.method.clone(),
                format!("{}", c.eer_pct),
            ];
            for far in &fars {
                let f = c.frr.iter().find(|f| f.far_pct == *far);
                if mode != FrrMode::Interpolated {
                    row.push(f.map_or(String::new(), |f| format!("{}", f.frr_pct)));
                }
                if mode != FrrMode::Conservative {
                    row.push(f.map_or(String::new(), |f| format!("{}", f.frr_interpolated_pct)));
                }
            }
            row.push(c.n_genuine.to_string());
            row.push(c.n_impostor.to_string());
            row.push(c.fido.as_ref().map_or(String::new(), |f| f.pass.to_string()));
            row
        })
        .collect()
}

fn methods_in_order(cells: &[Cell]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.contains(&c.method) {
            out.push(c.method.clone());
        }
    }
    out
}

type RowKey = (u64, usize);

fn row_keys(cells: &[Cell]) -> Vec<RowKey> {
    let set: BTreeSet<(usize, u64)> = cells.iter().map(|c| (c.images, c.gaze_seconds.to_bits())).collect();
    set.into_iter().map(|(i, g)| (g, i)).collect()
}

fn lookup<'a>(cells: &'a [Cell], key: RowKey, method: &str) -> Option<&'a Cell> {
    cells
        .iter()
        .find(|c| c.gaze_seconds.to_bits() == key.0 && c.images == key.1 && c.method == method)
}

/// One table block: rows are conditions, columns are methods. The smallest
/// value of each row is bold. A column whose values agree across all rows of
/// an image-count group is printed once and marked with a dagger.
fn block(out: &mut String, title: &str, cells: &[Cell], value: &dyn Fn(&Cell) -> Option<f64>) -> bool {
    let methods = methods_in_order(cells);
    let keys = row_keys(cells);
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "| Gaze (s) | Images | {} |", methods.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(methods.len()));
    let mut any_dagger = false;
    let mut repeated: BTreeSet<(usize, String)> = BTreeSet::new();
    let groups: BTreeSet<usize> = keys.iter().map(|k| k.1).collect();
    for g in &groups {
        let rows: Vec<RowKey> = keys.iter().copied().filter(|k| k.1 == *g).collect();
        if rows.len() < 2 {
            continue;
        }
        for m in &methods {
            let vals: Vec<Option<String>> = rows
                .iter()
                .map(|k| lookup(cells, *k, m).and_then(value).map(fmt_pct))
                .collect();
            if vals[0].is_some() && vals.iter().all(|v| *v == vals[0]) {
                repeated.insert((*g, m.clone()));
            }
        }
    }
    let mut seen: BTreeSet<(usize, String)> = BTreeSet::new();
    for k in &keys {
        let vals: Vec<Option<f64>> = methods
            .iter()
            .map(|m| lookup(cells, *k, m).and_then(value))
            .collect();
        let min = vals.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let mut line = format!("| {} | {} |", f64::from_bits(k.0), k.1);
        for (m, v) in methods.iter().zip(&vals) {
            let text = match v {
                None => "n/a".to_string(),
                Some(x) => {
                    let s = fmt_pct(*x);
                    let s = if fmt_pct(min) == s { format!("**{s}**") } else { s };
                    let id = (k.1, m.clone());
                    if repeated.contains(&id) {
                        any_dagger = true;
                        if seen.insert(id) {
                            format!("{s}†")
                        } else {
                            "〃".to_string()
                        }
                    } else {
                        s
                    }
                }
            };
            let _ = write!(line, " {text} |");
        }
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    any_dagger
}

pub fn markdown(cells: &[Cell], mode: FrrMode) -> String {
    let mut out = String::from("# Verification results\n\n");
    let mut dagger = block(&mut out, "EER (%)", cells, &|c| Some(c.eer_pct));
    if let Some(&far) = far_list(cells).first() {
        let interp = mode == FrrMode::Interpolated;
        let title = format!(
            "FRR (%) at FAR {far}%{}",
            if interp { " (interpolated)" } else { "" }
        );
        dagger |= block(&mut out, &title, cells, &|c| {
            c.frr
                .iter()
                .find(|f| f.far_pct == far)
                .map(|f| if interp { f.frr_interpolated_pct } else { f.frr_pct })
        });
        if mode == FrrMode::Both {
            dagger |= block(&mut out, &format!("FRR (%) at FAR {far}% (interpolated)"), cells, &|c| {
                c.frr.iter().find(|f| f.far_pct == far).map(|f| f.frr_interpolated_pct)
            });
        }
        let flagged: Vec<&Cell> = cells
            .iter()
            .filter(|c| c.frr.iter().any(|f| f.far_pct == far && (f.unreachable || f.low_resolution)))
            .collect();
        if !flagged.is_empty() {
            let _ = writeln!(
                out,
                "FRR at FAR {far}% is not resolved by the impostor count in {} cells (n_impostor = {}).\n",
                flagged.len(),
                flagged[0].n_impostor
            );
        }
    }
    if dagger {
        out.push_str("† Same value for every gaze length at this image count; shown once and marked 〃 below.\n\n");
    }
    let fido: Vec<&Cell> = cells.iter().filter(|c| c.fido.as_ref().is_some_and(|f| f.pass)).collect();
    let _ = writeln!(out, "### FIDO check\n");
    if fido.is_empty() {
        out.push_str("No cell meets FRR <= 3% at FAR 0.002% within 30 s.\n");
    } else {
        for c in fido {
            let _ = writeln!(out, "- {} at {} s / {} images passes", c.method, c.gaze_seconds, c.images);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FrrCell;

    fn cell(g: f64, images: usize, method: &str, eer: f64, frr: f64) -> Cell {
        Cell {
            gaze_seconds: g,
            images,
            method: method.into(),
            eer_pct: eer,
            frr: vec![FrrCell {
                far_pct: 0.002,
                frr_pct: frr,
                frr_interpolated_pct: frr - 0.5,
                unreachable: false,
                low_resolution: false,
            }],
            n_genuine: 10,
            n_impostor: 90,
            fido: None,
            w_g: None,
        }
    }

    fn cells() -> Vec<Cell> {
        vec![
            cell(5.0, 1, "EMA", 20.0, 90.0),
            cell(5.0, 1, "PIA", 10.0, 50.0),
            cell(20.0, 1, "EMA", 12.0, 80.0),
            cell(20.0, 1, "PIA", 10.0, 50.0),
        ]
    }

    #[test]
    fn far_labels() {
        assert_eq!(far_label(0.002), "0p002");
        assert_eq!(far_label(1.0), "1");
    }

    #[test]
    fn csv_columns_follow_mode() {
        let c = cells();
        assert_eq!(csv_header(&c, FrrMode::Conservative)[4], "frr_at_0p002_pct");
        assert_eq!(csv_header(&c, FrrMode::Interpolated)[4], "frr_interp_at_0p002_pct");
        let both = csv_header(&c, FrrMode::Both);
        assert_eq!(both.len(), 9);
        let rows = csv_rows(&c, FrrMode::Both);
        assert_eq!(rows[0][4..6], ["90".to_string(), "89.5".to_string()]);
    }

    #[test]
    fn minima_are_bold_and_repeats_marked_once() {
        let md = markdown(&cells(), FrrMode::Conservative);
        assert!(md.contains("| 5 | 1 | 20.000 | **10.000**† |"));
        assert!(md.contains("| 20 | 1 | 12.000 | 〃 |"));
        assert_eq!(md.matches("10.000").count(), 1);
        assert!(md.contains("† Same value"));
    }
}
