//! Regenerates the bundled training files under `data/`.
//!
//! ```text
//! cargo run -p fpt-core --example generate_fixtures -- data
//! ```
//!
//! The thyroid file is a synthetic cohort of 391 rows plus ten hand-placed
//! rows forming the demo patient's subtree (TIR3B, female, no thyroiditis,
//! no struma). The CKD file holds 2599 usable rows plus rows that the spec's
//! exclusion rules remove. The synthetic file is a planted-boundary cohort
//! used to compare fuzzy and crisp trees.

use std::path::{Path, PathBuf};

use fpt_core::evaluation::{generate_cohort, CohortSpec};

const THYROID_ROWS: usize = 401;
const CKD_ROWS: usize = 2599;
const SYNTHETIC_ROWS: usize = 1500;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    thyroid(&root.join("thyroid"))?;
    ckd(&root.join("ckd"))?;
    synthetic(&root.join("synthetic"))?;
    Ok(())
}

fn load(path: &Path) -> Result<CohortSpec, Box<dyn std::error::Error>> {
    Ok(CohortSpec::from_json(&std::fs::read_to_string(path)?)?)
}

fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), Box<dyn std::error::Error>> {
    let mut csv = csv::Writer::from_path(path)?;
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(row)?;
    }
    csv.flush()?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn thyroid(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = load(&dir.join("cohort.json"))?;
    let cohort = generate_cohort(&spec, 1000, 48)?;
    let col = |name: &str| cohort.header.iter().position(|h| h == name).unwrap();
    let (tirads, gender, thyroiditis, struma) =
        (col("TIRADS"), col("Gender"), col("Thyroiditis"), col("Struma"));
    let in_demo_subtree = |row: &Vec<String>| {
        row[tirads] == "TIR3B" && row[gender] == "F" && row[thyroiditis] == "0" && row[struma] == "0"
    };
    // age, size, malignant
    let demo: [(u32, u32, u8); 10] = [
        (35, 8, 0),
        (42, 12, 0),
        (29, 15, 0),
        (45, 22, 0),
        (38, 30, 0),
        (61, 11, 0),
        (57, 14, 1),
        (66, 9, 1),
        (72, 25, 0),
        (55, 31, 1),
    ];
    let mut rows: Vec<Vec<String>> = cohort
        .rows
        .iter()
        .filter(|r| !in_demo_subtree(r))
        .take(THYROID_ROWS - demo.len())
        .cloned()
        .collect();
    for (age, size, label) in demo {
        rows.push(vec![
            String::new(),
            "TIR3B".into(),
            "F".into(),
            age.to_string(),
            "0".into(),
            "0".into(),
            size.to_string(),
            label.to_string(),
        ]);
    }
    assert_eq!(rows.len(), THYROID_ROWS);
    for (i, row) in rows.iter_mut().enumerate() {
        row[0] = format!("T{:04}", i + 1);
    }
    write(&dir.join("train.csv"), &cohort.header, &rows)
}

fn ckd(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = load(&dir.join("cohort.json"))?;
    let cohort = generate_cohort(&spec, 3200, 2599)?;
    let col = |name: &str| cohort.header.iter().position(|h| h == name).unwrap();
    let (stage, potassium, protein) = (col("GFRStage"), col("Potassium"), col("Protein24h"));
    let mut rows = Vec::new();
    let mut usable = 0;
    for row in &cohort.rows {
        if usable == CKD_ROWS {
            break;
        }
        if row[stage] != "G2" {
            usable += 1;
        }
        rows.push(row.clone());
    }
    assert_eq!(usable, CKD_ROWS);
    for (i, row) in rows.iter_mut().enumerate() {
        row[0] = format!("C{:05}", i + 1);
    }
    // repeated patients, then incomplete lab panels
    let usable_rows: Vec<Vec<String>> = rows.iter().filter(|r| r[stage] != "G2").cloned().collect();
    let mut extra: Vec<Vec<String>> = usable_rows.iter().step_by(97).take(24).cloned().collect();
    let mut next_id = rows.len() + 1;
    for (k, base) in usable_rows.iter().skip(13).step_by(131).take(18).enumerate() {
        let mut row = base.clone();
        row[0] = format!("C{next_id:05}");
        next_id += 1;
        if k % 3 == 0 {
            row[protein].clear();
        } else {
            row[potassium].clear();
        }
        extra.push(row);
    }
    rows.extend(extra);
    write(&dir.join("train.csv"), &cohort.header, &rows)
}

fn synthetic(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = load(&dir.join("cohort.json"))?;
    let cohort = generate_cohort(&spec, SYNTHETIC_ROWS, 40)?;
    write(&dir.join("train.csv"), &cohort.header, &cohort.rows)
}
