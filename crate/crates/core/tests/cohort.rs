use std::collections::HashMap;

use ihc_triage::cohort::{
    characteristics_table, filter_ihc_basal, parse_manifest_csv, write_manifest_csv, CohortError, CohortManifest,
    DatasetType, PatientRecord, Psa, SlideRecord, MANIFEST_COLUMNS,
};
use ihc_triage::eval::{LabelLevel, Truth};
use ihc_triage::{GleasonScore, Isup};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GLEASON: [(&str, u8); 9] =
    [("3+3", 1), ("3+4", 2), ("4+3", 3), ("4+4", 4), ("3+5", 4), ("5+3", 4), ("4+5", 5), ("5+4", 5), ("5+5", 5)];

fn clean_row(rng: &mut ChaCha8Rng, i: usize, patients: &[(String, String, String)]) -> Vec<String> {
    let (pid, age, psa) = patients[rng.random_range(0..patients.len())].clone();
    let malignant = rng.random_bool(0.5);
    let level = ["", "slide", "location"][rng.random_range(0..3)];
    let (isup, gleason, length) = if malignant {
        let (g, grade) = GLEASON[rng.random_range(0..9)];
        let isup = if level == "location" && rng.random_bool(0.3) { String::new() } else { grade.to_string() };
        let gleason = if rng.random_bool(0.7) { g.to_string() } else { String::new() };
        let length = if rng.random_bool(0.9) { format!("{:.1}", rng.random_range(0.1..20.0)) } else { String::new() };
        (isup, gleason, length)
    } else {
        (String::new(), String::new(), ["", "0"][rng.random_range(0..2)].to_string())
    };
    vec![
        format!("s{i}"),
        pid,
        "C".into(),
        if malignant { "malignant" } else { "benign" }.into(),
        isup,
        gleason,
        length,
        ["true", "false"][rng.random_range(0..2)].into(),
        ["p63", "HMWCK + P504S", "", "P504S"][rng.random_range(0..4)].into(),
        level.into(),
        age,
        psa,
    ]
}

/// Replace one cell with a value chosen to break (or sometimes not break) a rule.
fn inject(rng: &mut ChaCha8Rng, rows: &mut [Vec<String>]) {
    let r = rng.random_range(0..rows.len());
    let (col, vals): (usize, &[&str]) = match rng.random_range(0..9) {
        0 => (3, &["maybe", "benign", "malignant"]),
        1 => (4, &["7", "two", "2", ""]),
        2 => (5, &["3+6", "x", "4+4", ""]),
        3 => (6, &["-1", "abc", "3"]),
        4 => (7, &["perhaps", "true"]),
        5 => (9, &["core", "location"]),
        6 => (10, &["-4", "old", "55"]),
        7 => (11, &["high", "-2", "elevated", "7.5"]),
        _ => {
            let other = rng.random_range(0..rows.len());
            rows[r][0] = rows[other][0].clone();
            return;
        }
    };
    rows[r][col] = vals[rng.random_range(0..vals.len())].to_string();
}

/// Independent acceptance rule over raw cells.
fn oracle_accepts(rows: &[Vec<String>]) -> bool {
    let is_num = |s: &str| s.parse::<f64>().is_ok_and(|v| v.is_finite() && v >= 0.0);
    let grade_of = |g: &str| GLEASON.iter().find(|(s, _)| *s == g).map(|(_, n)| *n);
    let mut ids = std::collections::HashSet::new();
    let mut patients: HashMap<&str, (&str, &str)> = HashMap::new();
    for r in rows {
        let [id, pid, cohort, truth, isup, gleason, length, ihc, _stain, level, age, psa] = &r[..] else {
            return false;
        };
        let ok = cohort == "C"
            && ids.insert(id.as_str())
            && (isup.is_empty() || matches!(isup.as_str(), "1" | "2" | "3" | "4" | "5"))
            && (gleason.is_empty() || grade_of(gleason).is_some())
            && (length.is_empty() || is_num(length))
            && matches!(ihc.as_str(), "true" | "false")
            && matches!(level.as_str(), "" | "slide" | "location")
            && (age.is_empty() || age.parse::<u32>().is_ok())
            && (psa.is_empty() || psa == "elevated" || is_num(psa));
        if !ok {
            return false;
        }
        match truth.as_str() {
            "benign" => {
                if !isup.is_empty() || !gleason.is_empty() || !(length.is_empty() || length.parse::<f64>() == Ok(0.0)) {
                    return false;
                }
            }
            "malignant" => {
                if level != "location" && isup.is_empty() {
                    return false;
                }
                if !isup.is_empty() && !gleason.is_empty() && grade_of(gleason).unwrap().to_string() != *isup {
                    return false;
                }
            }
            _ => return false,
        }
        match patients.get(pid.as_str()) {
            Some(&(a, p)) if (a, p) != (age.as_str(), psa.as_str()) => return false,
            _ => {
                patients.insert(pid, (age, psa));
            }
        }
    }
    true
}

fn to_csv(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_COLUMNS).unwrap();
    for r in rows {
        w.write_record(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[test]
fn random_manifests_match_validation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..60 {
        let patients: Vec<(String, String, String)> = (0..120)
            .map(|i| {
                let age = if rng.random_bool(0.9) { rng.random_range(40..90).to_string() } else { String::new() };
                let psa = ["", "elevated", "4.2", "12", "0.5"][rng.random_range(0..5)].to_string();
                (format!("p{i}"), age, psa)
            })
            .collect();
        let mut rows: Vec<Vec<String>> = (0..500).map(|i| clean_row(&mut rng, i, &patients)).collect();
        for _ in 0..[0, 0, 1, 3][rng.random_range(0..4)] {
            inject(&mut rng, &mut rows);
        }
        let expected = oracle_accepts(&rows);
        let got = parse_manifest_csv(&to_csv(&rows));
        assert_eq!(got.is_ok(), expected, "{:?}", got.err());
        if let Err(CohortError::Invalid(issues)) = &got {
            assert!(issues.iter().all(|i| i.row.is_some_and(|r| (2..=501).contains(&r))));
        }
        if expected { accepted += 1 } else { rejected += 1 }
    }
    assert!(accepted > 5 && rejected > 5);
}

fn parse_rows(rows: &[Vec<String>]) -> CohortManifest {
    parse_manifest_csv(&to_csv(rows)).unwrap()
}

#[test]
fn filter_matches_per_row_predicate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let patients = vec![("p".to_string(), "60".to_string(), String::new())];
    let rows: Vec<Vec<String>> = (0..400).map(|i| clean_row(&mut rng, i, &patients)).collect();
    let m = parse_rows(&rows);
    let (kept, ledger) = filter_ihc_basal(&m);
    let expected: Vec<&str> = rows
        .iter()
        .filter(|r| r[7] == "true" && (r[8].to_lowercase().contains("p63") || r[8].to_lowercase().contains("hmwck")))
        .map(|r| r[0].as_str())
        .collect();
    assert_eq!(kept.iter().map(|s| s.slide_id.as_str()).collect::<Vec<_>>(), expected);
    assert!(ledger.reconciles());
    assert_eq!(ledger.stages.last().unwrap().count, kept.len());
    let mut again = m.clone();
    again.slides = kept.clone();
    assert_eq!(filter_ihc_basal(&again).0, kept);
}

#[test]
fn bin_totals_equal_cohort_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let patients: Vec<(String, String, String)> = (0..50)
            .map(|i| {
                let age = if rng.random_bool(0.9) { rng.random_range(30..95).to_string() } else { String::new() };
                let psa = if rng.random_bool(0.8) { format!("{:.2}", rng.random_range(0.0..30.0)) } else { "elevated".into() };
                (format!("p{i}"), age, psa)
            })
            .collect();
        let rows: Vec<Vec<String>> = (0..300).map(|i| clean_row(&mut rng, i, &patients)).collect();
        let m = parse_rows(&rows);
        let t = characteristics_table(&m);
        for s in &t.sections {
            let total: usize = s.rows.iter().map(|r| r.count).sum();
            let want = match s.unit {
                ihc_triage::cohort::SectionUnit::Patients => m.patients.len(),
                ihc_triage::cohort::SectionUnit::Slides => m.slides.len(),
            };
            assert_eq!(total, want, "{}", s.name);
            let pct: f64 = s.rows.iter().map(|r| r.percent).sum();
            assert!((pct - 100.0).abs() < 0.05, "{} sums to {pct}", s.name);
        }
    }
}

/// Builds a manifest with the given marginals. Ages and PSA values are
/// representative points inside each bin.
fn reference_manifest(
    cohort: &str,
    age: [usize; 6],
    psa: [usize; 6],
    isup: [usize; 6],
    length: [usize; 6],
    level: LabelLevel,
) -> CohortManifest {
    let ages = [45u32, 52, 57, 62, 67, 75];
    let psas = [Some(Psa::Value(2.0)), Some(Psa::Value(4.0)), Some(Psa::Value(7.0)), Some(Psa::Value(15.0)), Some(Psa::Elevated), None];
    let age_seq: Vec<u32> = age.iter().zip(ages).flat_map(|(&n, a)| std::iter::repeat_n(a, n)).collect();
    let psa_seq: Vec<Option<Psa>> = psa.iter().zip(psas).flat_map(|(&n, p)| std::iter::repeat_n(p, n)).collect();
    assert_eq!(age_seq.len(), psa_seq.len());
    let patients: Vec<PatientRecord> = age_seq
        .iter()
        .zip(&psa_seq)
        .enumerate()
        .map(|(i, (&a, &p))| PatientRecord { patient_id: format!("p{i}"), age_years: Some(a), psa_ng_ml: p })
        .collect();
    assert_eq!(isup[0], length[0]);
    let grades: Vec<Isup> = isup.iter().zip(Isup::ALL).flat_map(|(&n, g)| std::iter::repeat_n(g, n)).collect();
    let lengths = [None, Some(0.5), Some(3.0), Some(7.0), Some(15.0), None];
    let malignant_lengths: Vec<Option<f64>> =
        length.iter().zip(lengths).skip(1).flat_map(|(&n, l)| std::iter::repeat_n(l, n)).collect();
    let mut li = 0;
    let slides = grades
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let malignant = !g.is_benign();
            let cancer_length_mm = if malignant {
                li += 1;
                malignant_lengths[li - 1]
            } else {
                None
            };
            SlideRecord {
                slide_id: format!("{cohort}-{i}"),
                patient_id: format!("p{}", i % patients.len()),
                cohort_id: cohort.into(),
                truth: if malignant { Truth::Malignant } else { Truth::Benign },
                isup: malignant.then_some(g),
                gleason: None::<GleasonScore>,
                cancer_length_mm,
                ihc_requested: true,
                stain_type: Some("p63".into()),
                label_level: level,
            }
        })
        .collect();
    CohortManifest {
        cohort_id: cohort.into(),
        dataset_type: Some(if cohort == "SUH" { DatasetType::Internal } else { DatasetType::External }),
        scanner_model: None,
        pathologist_count: None,
        slides,
        patients,
    }
}

fn cells(m: &CohortManifest) -> Vec<Vec<String>> {
    characteristics_table(m)
        .sections
        .iter()
        .map(|s| s.rows.iter().filter(|r| !(r.optional && r.count == 0)).map(|r| format!("{} ({:.1}%)", r.count, r.percent)).collect())
        .collect()
}

#[test]
fn reference_cohort_marginals() {
    let suh = reference_manifest("SUH", [1, 3, 9, 25, 23, 38], [7, 15, 50, 26, 0, 1], [129, 60, 15, 10, 9, 11], [129, 23, 42, 15, 25, 0], LabelLevel::Slide);
    suh.validate().unwrap();
    let c = cells(&suh);
    assert_eq!(c[0], ["1 (1.0%)", "3 (3.0%)", "9 (9.1%)", "25 (25.3%)", "23 (23.2%)", "38 (38.4%)"]);
    assert_eq!(c[1], ["7 (7.1%)", "15 (15.1%)", "50 (50.5%)", "26 (26.3%)", "0 (0.0%)", "1 (1.0%)"]);
    assert_eq!(c[2], ["129 (55.1%)", "60 (25.6%)", "15 (6.4%)", "10 (4.3%)", "9 (3.9%)", "11 (4.7%)"]);
    assert_eq!(c[3], ["129 (55.1%)", "23 (9.8%)", "42 (18.0%)", "15 (6.4%)", "25 (10.7%)", "0 (0.0%)"]);

    let sfr = reference_manifest("SFR", [0, 2, 8, 4, 14, 21], [1, 4, 29, 8, 0, 7], [66, 41, 3, 1, 1, 0], [66, 1, 21, 6, 13, 5], LabelLevel::Slide);
    let c = cells(&sfr);
    assert_eq!(c[0], ["0 (0.0%)", "2 (4.1%)", "8 (16.3%)", "4 (8.2%)", "14 (28.6%)", "21 (42.8%)"]);
    assert_eq!(c[1], ["1 (2.0%)", "4 (8.2%)", "29 (59.2%)", "8 (16.3%)", "0 (0.0%)", "7 (14.3%)"]);
    assert_eq!(c[2], ["66 (58.9%)", "41 (36.6%)", "3 (2.7%)", "1 (0.9%)", "1 (0.9%)", "0 (0.0%)"]);
    // largest-remainder rounding gives 18.7/4.5 where a hand-rounded
    // table could print 18.8/4.4; both sum to 100
    assert_eq!(c[3], ["66 (58.9%)", "1 (0.9%)", "21 (18.7%)", "6 (5.4%)", "13 (11.6%)", "5 (4.5%)"]);

    let sch = reference_manifest("SCH", [0, 1, 5, 10, 16, 43], [1, 6, 18, 13, 8, 29], [65, 50, 17, 24, 3, 5], [65, 3, 30, 8, 57, 1], LabelLevel::Location);
    let c = cells(&sch);
    assert_eq!(c[0], ["0 (0.0%)", "1 (1.3%)", "5 (6.7%)", "10 (13.3%)", "16 (21.3%)", "43 (57.4%)"]);
    assert_eq!(c[1], ["1 (1.3%)", "6 (8.0%)", "18 (24.0%)", "13 (17.3%)", "8 (10.7%)", "29 (38.7%)"]);
    assert_eq!(c[2], ["65 (39.6%)", "50 (30.5%)", "17 (10.4%)", "24 (14.6%)", "3 (1.8%)", "5 (3.1%)"]);
    assert_eq!(c[3], ["65 (39.6%)", "3 (1.8%)", "30 (18.3%)", "8 (4.9%)", "57 (34.8%)", "1 (0.6%)"]);
    let t = characteristics_table(&sch);
    assert!(t.sections[2].rows[1].asterisk && !t.sections[2].rows[0].asterisk);
}

proptest! {
    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patients: Vec<(String, String, String)> = (0..5)
            .map(|i| (format!("p{i}"), rng.random_range(40..90).to_string(), ["", "elevated", "3.25"][i % 3].to_string()))
            .collect();
        let rows: Vec<Vec<String>> = (0..n).map(|i| clean_row(&mut rng, i, &patients)).collect();
        let m = parse_rows(&rows);
        let again = parse_manifest_csv(&write_manifest_csv(&m).unwrap()).unwrap();
        prop_assert_eq!(&again, &m);
        let json = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(ihc_triage::cohort::parse_manifest_json(&json).unwrap(), m);
    }
}
