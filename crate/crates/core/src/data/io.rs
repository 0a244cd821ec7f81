use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BidRecord, Campaign, Dataset, DatasetHeader, DayPair, Trajectory, VARIABLES};
use crate::error::{Error, LineProblem, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    campaign: Campaign,
    history: Vec<BidRecord>,
    today: Vec<BidRecord>,
}

/// Reads a JSON-lines dataset: a header line, then one campaign-day pair per line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => {
                return Err(Error::Load(vec![LineProblem {
                    line: 1,
                    message: "missing header".into(),
                }]))
            }
            Some((i, line)) => {
                let line = line.map_err(|e| Error::Data(format!("read error at line {}: {e}", i + 1)))?;
                if line.trim().is_empty() {
                    continue;
                }
                break parse_header(&line, i + 1)?;
            }
        }
    };

    let mut pairs = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| Error::Data(format!("read error at line {n}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PairLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                problems.push(LineProblem {
                    line: n,
                    message: format!("malformed pair ({e})"),
                });
                continue;
            }
        };
        let before = problems.len();
        validate_pair(&parsed, &header, n, &mut problems);
        if problems.len() == before {
            pairs.push(DayPair {
                campaign: parsed.campaign,
                history: Trajectory {
                    day: 0,
                    records: parsed.history,
                    complete: true,
                },
                today: Trajectory {
                    day: 1,
                    records: parsed.today,
                    complete: true,
                },
            });
        }
    }
    if !problems.is_empty() {
        return Err(Error::Load(problems));
    }
    if pairs.is_empty() {
        log::warn!("dataset has a header but no records");
    }
    Ok(Dataset { header, pairs })
}

fn parse_header(line: &str, n: usize) -> Result<DatasetHeader> {
    let header: DatasetHeader = serde_json::from_str(line).map_err(|e| {
        Error::Load(vec![LineProblem {
            line: n,
            message: format!("missing header ({e})"),
        }])
    })?;
    let problem = |message: String| Error::Load(vec![LineProblem { line: n, message }]);
    if header.version != DatasetHeader::VERSION {
        return Err(problem(format!("unsupported version {}", header.version)));
    }
    if header.variables != VARIABLES {
        return Err(problem(format!("unexpected variable list {:?}", header.variables)));
    }
    if header.t_max == 0 || header.adv_cat_vocab == 0 || header.prod_cat_vocab == 0 {
        return Err(problem("T_max and vocabulary sizes must be positive".into()));
    }
    Ok(header)
}

fn validate_pair(p: &PairLine, h: &DatasetHeader, line: usize, out: &mut Vec<LineProblem>) {
    let mut push = |message: String| out.push(LineProblem { line, message });
    let c = &p.campaign;
    if c.advertiser_category >= h.adv_cat_vocab {
        push(format!(
            "advertiser category {} exceeds vocabulary {}",
            c.advertiser_category, h.adv_cat_vocab
        ));
    }
    if c.product_category >= h.prod_cat_vocab {
        push(format!(
            "product category {} exceeds vocabulary {}",
            c.product_category, h.prod_cat_vocab
        ));
    }
    if c.context.len() != h.context_len {
        push(format!(
            "context has {} features, header declares {}",
            c.context.len(),
            h.context_len
        ));
    }
    if !(c.budget.is_finite() && c.budget >= 0.0) || c.context.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        push("campaign features must be finite and non-negative".into());
    }
    for (name, records) in [("history", &p.history), ("today", &p.today)] {
        if records.is_empty() {
            push(format!("empty {name} trajectory"));
            continue;
        }
        if records.len() > h.t_max {
            push(format!("{name} has {} records, more than T_max {}", records.len(), h.t_max));
        }
        let mut prev: Option<u32> = None;
        for r in records.iter() {
            if let Some(t) = prev {
                if r.tick <= t {
                    push(format!("non-monotone tick in {name}"));
                    break;
                }
            }
            prev = Some(r.tick);
            if r.tick as usize >= h.t_max {
                push(format!("tick {} beyond T_max {} in {name}", r.tick, h.t_max));
                break;
            }
            if ![r.bid, r.cost, r.reward].iter().all(|v| v.is_finite() && *v >= 0.0) {
                push(format!("negative or non-finite value in {name}"));
                break;
            }
            if r.cost == 0.0 && (r.count != 0 || r.reward != 0.0) {
                push(format!("zero cost with nonzero outcome in {name}"));
                break;
            }
        }
    }
}

/// Writes `dataset` in the format [`load_dataset`] reads. Output is a pure
/// function of the value, so identical datasets give identical bytes.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let json = |e: serde_json::Error| Error::Data(e.to_string());
    writeln!(w, "{}", serde_json::to_string(&dataset.header).map_err(json)?).map_err(io)?;
    for p in &dataset.pairs {
        let line = PairLine {
            campaign: p.campaign.clone(),
            history: p.history.records.clone(),
            today: p.today.records.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line).map_err(json)?).map_err(io)?;
    }
    w.flush().map_err(io)
}
