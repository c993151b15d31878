use std::cmp::Reverse;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CohortManifest, DatasetType, Psa, SlideRecord};
use crate::eval::{LabelLevel, Truth};
use crate::Isup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionUnit {
    Patients,
    Slides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub label: String,
    pub count: usize,
    /// Percent of the section total, one decimal, summing to exactly 100.
    pub percent: f64,
    /// Counts include location-level labels.
    pub asterisk: bool,
    /// Rendered only when some cohort has a non-zero count.
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub unit: SectionUnit,
    pub rows: Vec<BinRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsTable {
    pub cohort_id: String,
    pub dataset_type: Option<DatasetType>,
    pub scanner_model: Option<String>,
    pub pathologist_count: Option<u32>,
    pub n_patients: usize,
    pub n_slides: usize,
    pub sections: Vec<Section>,
}

/// Percentages to one decimal by the largest-remainder method, so that each
/// section sums to exactly 100.0. Leftover tenths go to the larger
/// remainder, then the larger count, then the earlier row.
pub fn largest_remainder_percent(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    const UNITS: usize = 1000;
    let mut tenths: Vec<usize> = counts.iter().map(|c| c * UNITS / total).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (Reverse(counts[i] * UNITS % total), Reverse(counts[i]), i));
    let left = UNITS - tenths.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        tenths[i] += 1;
    }
    tenths.into_iter().map(|t| t as f64 / 10.0).collect()
}

fn age_bin(age: u32) -> usize {
    match age {
        0..=49 => 0,
        50..=54 => 1,
        55..=59 => 2,
        60..=64 => 3,
        65..=69 => 4,
        _ => 5,
    }
}

fn psa_bin(psa: Psa) -> usize {
    match psa {
        Psa::Value(v) if v <= 3.0 => 0,
        Psa::Value(v) if v <= 5.0 => 1,
        Psa::Value(v) if v < 10.0 => 2,
        Psa::Value(_) => 3,
        Psa::Elevated => 4,
    }
}

const NO_CANCER: usize = 0;
const LENGTH_MISSING: usize = 5;

fn length_bin(s: &SlideRecord) -> usize {
    if s.truth == Truth::Benign {
        return NO_CANCER;
    }
    match s.cancer_length_mm {
        None => LENGTH_MISSING,
        Some(l) if l <= 0.0 => LENGTH_MISSING,
        Some(l) if l <= 1.0 => 1,
        Some(l) if l <= 5.0 => 2,
        Some(l) if l <= 10.0 => 3,
        Some(_) => 4,
    }
}

fn isup_bin(s: &SlideRecord) -> usize {
    match (s.truth, s.isup) {
        (Truth::Benign, _) => 0,
        (Truth::Malignant, Some(g)) => g.grade() as usize,
        (Truth::Malignant, None) => 6,
    }
}

fn section(name: &str, unit: SectionUnit, labels: &[(&str, bool)], counts: &[usize], stars: &[bool]) -> Section {
    let pct = largest_remainder_percent(counts);
    Section {
        name: name.into(),
        unit,
        rows: labels
            .iter()
            .enumerate()
            .map(|(i, &(label, optional))| BinRow {
                label: label.into(),
                count: counts[i],
                percent: pct[i],
                asterisk: stars[i],
                optional,
            })
            .collect(),
    }
}

pub fn characteristics_table(manifest: &CohortManifest) -> CharacteristicsTable {
    let mut age = [0usize; 7];
    let mut psa = [0usize; 6];
    for p in &manifest.patients {
        age[p.age_years.map_or(6, age_bin)] += 1;
        psa[p.psa_ng_ml.map_or(5, psa_bin)] += 1;
    }
    let mut isup = [0usize; 7];
    let mut isup_star = [false; 7];
    let mut length = [0usize; 6];
    let mut length_star = [false; 6];
    for s in &manifest.slides {
        let location = s.label_level == LabelLevel::Location && s.truth == Truth::Malignant;
        let (i, l) = (isup_bin(s), length_bin(s));
        isup[i] += 1;
        isup_star[i] |= location;
        length[l] += 1;
        length_star[l] |= location;
    }
    let flat = |n| vec![false; n];
    let isup_labels: Vec<String> = std::iter::once("Benign".to_string())
        .chain(Isup::MALIGNANT.iter().map(|g| format!("ISUP {g}")))
        .collect();
    let mut isup_rows: Vec<(&str, bool)> = isup_labels.iter().map(|l| (l.as_str(), false)).collect();
    isup_rows.push(("Missing", true));
    CharacteristicsTable {
        cohort_id: manifest.cohort_id.clone(),
        dataset_type: manifest.dataset_type,
        scanner_model: manifest.scanner_model.clone(),
        pathologist_count: manifest.pathologist_count,
        n_patients: manifest.patients.len(),
        n_slides: manifest.slides.len(),
        sections: vec![
            section(
                "Age (years)",
                SectionUnit::Patients,
                &[("≤49", false), ("50–54", false), ("55–59", false), ("60–64", false), ("65–69", false), ("≥70", false), ("Missing", true)],
                &age,
                &flat(7),
            ),
            section(
                "Prostate-specific antigen (ng/ml)",
                SectionUnit::Patients,
                &[("0–3", false), (">3–5", false), (">5–10", false), ("≥10", false), ("Elevated", false), ("Missing", false)],
                &psa,
                &flat(6),
            ),
            section("ISUP grade", SectionUnit::Slides, &isup_rows, &isup, &isup_star),
            section(
                "Cancer length (mm)",
                SectionUnit::Slides,
                &[("No cancer", false), (">0–1", false), (">1–5", false), (">5–10", false), (">10", false), ("Missing", false)],
                &length,
                &length_star,
            ),
        ],
    }
}

fn cell(r: &BinRow) -> String {
    format!("{} ({:.1}%){}", r.count, r.percent, if r.asterisk { "*" } else { "" })
}

/// Side-by-side markdown table, one column per cohort.
pub fn characteristics_markdown(tables: &[CharacteristicsTable]) -> String {
    let mut out = String::new();
    let row = |out: &mut String, label: &str, cells: Vec<String>| {
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    };
    let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
    row(&mut out, "", tables.iter().map(|t| t.cohort_id.clone()).collect());
    let _ = writeln!(out, "|---|{}", "---|".repeat(tables.len()));
    row(&mut out, "Dataset type", tables.iter().map(|t| opt(t.dataset_type.map(|d| d.to_string()))).collect());
    row(&mut out, "Scanner", tables.iter().map(|t| opt(t.scanner_model.clone())).collect());
    row(&mut out, "Pathologists", tables.iter().map(|t| opt(t.pathologist_count.map(|n| n.to_string()))).collect());
    row(&mut out, "Patients", tables.iter().map(|t| t.n_patients.to_string()).collect());
    row(&mut out, "Slides", tables.iter().map(|t| t.n_slides.to_string()).collect());
    let Some(first) = tables.first() else { return out };
    for (si, sec) in first.sections.iter().enumerate() {
        row(&mut out, &format!("**{}**", sec.name), vec![String::new(); tables.len()]);
        for (ri, r) in sec.rows.iter().enumerate() {
            let cells: Vec<&BinRow> = tables.iter().map(|t| &t.sections[si].rows[ri]).collect();
            if r.optional && cells.iter().all(|c| c.count == 0) {
                continue;
            }
            row(&mut out, &r.label, cells.into_iter().map(cell).collect());
        }
    }
    if tables.iter().flat_map(|t| &t.sections).flat_map(|s| &s.rows).any(|r| r.asterisk) {
        out.push_str("\n\\* recorded per prostate location, not per slide.\n");
    }
    out
}

pub fn characteristics_csv(tables: &[CharacteristicsTable]) -> String {
    let mut out = String::from("cohort_id,section,label,count,percent,asterisk\n");
    for t in tables {
        for s in &t.sections {
            for r in &s.rows {
                let _ = writeln!(out, "{},\"{}\",\"{}\",{},{:.1},{}", t.cohort_id, s.name, r.label, r.count, r.percent, r.asterisk);
            }
        }
    }
    out
}
