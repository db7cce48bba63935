//! TSV and JSON file formats.
//!
//! Count matrix TSV: header `gene_id<TAB>sample1<TAB>...`, one gene per row.
//! Lengths TSV: `gene_id<TAB>length`. Groups TSV: `sample_id<TAB>group_index`
//! with 1-based group indices. Truth TSV (simulator output):
//! `gene_id<TAB>is_de<TAB>gamma_true`. UTF-8, LF or CRLF line endings.

use ndarray::Array2;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::CountMatrix;
use crate::simulate::{SimOutput, SimScenario};

/// A parsed count table before group assembly.
#[derive(Debug, Clone)]
pub struct CountTable {
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub counts: Array2<f64>,
}

fn lines_of(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path)?;
    Ok(raw
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("'{field}' is not a number"),
    })
}

/// Read a count matrix TSV.
pub fn read_counts_tsv(path: &Path) -> Result<CountTable> {
    let lines = lines_of(path)?;
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        });
    }
    let header: Vec<&str> = lines[0].split('\t').collect();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be gene_id<TAB>sample1<TAB>...".into(),
        });
    }
    let sample_ids: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let n = sample_ids.len();
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} fields, found {}", n + 1, fields.len()),
            });
        }
        gene_ids.push(fields[0].to_string());
        for f in &fields[1..] {
            values.push(parse_number(f, idx + 1)?);
        }
    }
    if gene_ids.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    let m = gene_ids.len();
    let counts = Array2::from_shape_vec((m, n), values)
        .expect("shape checked during parsing");
    Ok(CountTable {
        gene_ids,
        sample_ids,
        counts,
    })
}

/// Read a `sample_id<TAB>group_index` file.
pub fn read_groups_tsv(path: &Path) -> Result<HashMap<String, usize>> {
    let lines = lines_of(path)?;
    let mut map = HashMap::new();
    for (idx, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected sample_id<TAB>group_index, found {} fields", fields.len()),
            });
        }
        let group: usize = fields[1].trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("'{}' is not a group index", fields[1]),
        })?;
        map.insert(fields[0].to_string(), group);
    }
    if map.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no group assignments".into(),
        });
    }
    Ok(map)
}

/// Read a `gene_id<TAB>length` file.
pub fn read_lengths_tsv(path: &Path) -> Result<HashMap<String, f64>> {
    let lines = lines_of(path)?;
    let mut map = HashMap::new();
    for (idx, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected gene_id<TAB>length, found {} fields", fields.len()),
            });
        }
        map.insert(fields[0].to_string(), parse_number(fields[1], idx + 1)?);
    }
    Ok(map)
}

/// Assemble a [`CountMatrix`] from a parsed table, group assignments and
/// optional lengths. Sample order follows the count table columns.
pub fn assemble_count_matrix(
    table: &CountTable,
    groups: &HashMap<String, usize>,
    lengths: Option<&HashMap<String, f64>>,
) -> Result<CountMatrix> {
    let mut group_of_sample = Vec::with_capacity(table.sample_ids.len());
    for id in &table.sample_ids {
        let g = groups.get(id).ok_or_else(|| {
            Error::InvalidInput(format!("sample '{id}' missing from group file"))
        })?;
        group_of_sample.push(*g);
    }
    let gene_lengths = match lengths {
        None => None,
        Some(map) => {
            let mut ls = Vec::with_capacity(table.gene_ids.len());
            for id in &table.gene_ids {
                let l = map.get(id).ok_or_else(|| {
                    Error::InvalidInput(format!("gene '{id}' missing from lengths file"))
                })?;
                ls.push(*l);
            }
            Some(ls)
        }
    };
    CountMatrix::new(
        table.gene_ids.clone(),
        table.counts.clone(),
        group_of_sample,
        gene_lengths,
    )
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Write a gene × sample matrix in count-table TSV format.
pub fn write_matrix_tsv(
    path: &Path,
    gene_ids: &[String],
    sample_ids: &[String],
    values: &Array2<f64>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("gene_id");
    for s in sample_ids {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (i, id) in gene_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..values.ncols() {
            out.push('\t');
            out.push_str(&format_value(values[[i, j]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Default sample ids for a grouped matrix: `g<group>s<index-in-group>`.
pub fn default_sample_ids(group_of_sample: &[usize]) -> Vec<String> {
    let mut within = HashMap::new();
    group_of_sample
        .iter()
        .map(|&g| {
            let k = within.entry(g).or_insert(0usize);
            *k += 1;
            format!("g{}s{}", g, k)
        })
        .collect()
}

/// Write everything a simulation produced: counts, groups, truth, scenario.
pub fn write_sim_output(dir: &Path, sim: &SimOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sample_ids = default_sample_ids(&sim.counts.group_of_sample);
    write_matrix_tsv(
        &dir.join("counts.tsv"),
        &sim.counts.gene_ids,
        &sample_ids,
        &sim.counts.counts,
    )?;

    let mut groups = String::new();
    for (id, g) in sample_ids.iter().zip(&sim.counts.group_of_sample) {
        groups.push_str(&format!("{id}\t{g}\n"));
    }
    fs::write(dir.join("groups.tsv"), groups)?;

    if let Some(lengths) = &sim.counts.gene_lengths {
        let mut out = String::new();
        for (id, l) in sim.counts.gene_ids.iter().zip(lengths) {
            out.push_str(&format!("{id}\t{l}\n"));
        }
        fs::write(dir.join("lengths.tsv"), out)?;
    }

    let mut truth = String::from("gene_id\tis_de\tgamma_true\n");
    for (i, id) in sim.counts.gene_ids.iter().enumerate() {
        truth.push_str(&format!(
            "{id}\t{}\t{}\n",
            u8::from(sim.truth.is_de[i]),
            sim.truth.gamma[i]
        ));
    }
    fs::write(dir.join("truth.tsv"), truth)?;

    let scenario_json = serde_json::to_string_pretty(&sim.scenario)?;
    fs::write(dir.join("scenario.json"), scenario_json)?;
    Ok(())
}

/// Read a scenario JSON file.
pub fn read_scenario_json(path: &Path) -> Result<SimScenario> {
    let raw = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

/// Read a truth TSV back into (is_de, gamma_true) columns.
pub fn read_truth_tsv(path: &Path) -> Result<(Vec<bool>, Vec<f64>)> {
    let lines = lines_of(path)?;
    let mut is_de = Vec::new();
    let mut gamma = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        is_de.push(fields[1].trim() == "1");
        gamma.push(parse_number(fields[2], idx + 1)?);
    }
    Ok((is_de, gamma))
}
