//! Plot-ready CSV tables extracted from `analyze` and `intel` reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("report has no {0:?} section")]
    MissingSection(String),
    #[error("section {section:?} is malformed: {message}")]
    Malformed { section: String, message: String },
    #[error("unknown figure {0:?}")]
    UnknownFigure(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    /// `[[label, count], ...]`.
    Ranked,
    /// `[{"label", "malicious", "benign", "total"}, ...]`.
    Crawls,
    /// An intersection report.
    Venn,
    /// `[{"label", "agents": [[agent, count], ...]}, ...]`.
    Agents,
}

/// One exportable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Figure {
    pub name: &'static str,
    section: &'static [&'static str],
    header: &'static [&'static str],
    shape: Shape,
}

pub const FIGURES: &[Figure] = &[
    Figure {
        name: "malicious_per_crawl",
        section: &["crawls"],
        header: &["crawl", "malicious", "benign", "total"],
        shape: Shape::Crawls,
    },
    Figure {
        name: "crawl_overlap",
        section: &["intersection"],
        header: &["region", "exclusive", "inclusive"],
        shape: Shape::Venn,
    },
    Figure {
        name: "malicious_overlap",
        section: &["malicious_intersection"],
        header: &["region", "exclusive", "inclusive"],
        shape: Shape::Venn,
    },
    Figure {
        name: "agents",
        section: &["snapshots"],
        header: &["crawl", "agent", "count"],
        shape: Shape::Agents,
    },
    Figure {
        name: "os",
        section: &["os"],
        header: &["os", "ips"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "ports",
        section: &["ports"],
        header: &["port", "ips"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "services",
        section: &["services"],
        header: &["service", "ips"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "jarms",
        section: &["jarm_clusters"],
        header: &["jarm", "ips"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "sinkholed_urls",
        section: &["sinkhole", "url_counts"],
        header: &["url", "ips"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "tlds",
        section: &["sinkhole", "tld_counts"],
        header: &["tld", "domains"],
        shape: Shape::Ranked,
    },
    Figure {
        name: "campaigns",
        section: &["campaigns"],
        header: &["campaign", "ips"],
        shape: Shape::Ranked,
    },
];

pub fn figure(name: &str) -> Result<&'static Figure, ExportError> {
    FIGURES
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| ExportError::UnknownFigure(name.to_string()))
}

impl Figure {
    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    fn section_name(&self) -> String {
        self.section.join(".")
    }

    pub fn is_present(&self, report: &Value) -> bool {
        self.locate(report).is_ok()
    }

    fn locate<'a>(&self, report: &'a Value) -> Result<&'a Value, ExportError> {
        let mut v = report;
        for key in self.section {
            v = v.get(key).filter(|x| !x.is_null()).ok_or_else(|| ExportError::MissingSection(self.section_name()))?;
        }
        Ok(v)
    }

    fn malformed(&self, message: &str) -> ExportError {
        ExportError::Malformed {
            section: self.section_name(),
            message: message.to_string(),
        }
    }

    /// The table as CSV with a header row, even when the section is empty.
    pub fn render(&self, report: &Value) -> Result<String, ExportError> {
        let section = self.locate(report)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header).expect("in-memory write");
        for row in self.rows(section)? {
            w.write_record(&row).expect("in-memory write");
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8"))
    }

    fn rows(&self, section: &Value) -> Result<Vec<Vec<String>>, ExportError> {
        match self.shape {
            Shape::Ranked => self.array(section)?.iter().map(|r| self.pair(r)).collect(),
            Shape::Crawls => self
                .array(section)?
                .iter()
                .map(|c| {
                    ["label", "malicious", "benign", "total"]
                        .iter()
                        .map(|k| scalar(&c[*k]).ok_or_else(|| self.malformed(&format!("crawl lacks {k}"))))
                        .collect()
                })
                .collect(),
            Shape::Agents => {
                let mut out = Vec::new();
                for snap in self.array(section)? {
                    let label = scalar(&snap["label"]).ok_or_else(|| self.malformed("snapshot lacks label"))?;
                    for r in self.array(&snap["agents"])? {
                        let mut row = vec![label.clone()];
                        row.extend(self.pair(r)?);
                        out.push(row);
                    }
                }
                Ok(out)
            }
            Shape::Venn => self.venn_rows(section),
        }
    }

    fn array<'a>(&self, v: &'a Value) -> Result<&'a Vec<Value>, ExportError> {
        v.as_array().ok_or_else(|| self.malformed("expected an array"))
    }

    fn pair(&self, r: &Value) -> Result<Vec<String>, ExportError> {
        match r.as_array().map(Vec::as_slice) {
            Some([a, b]) => Ok(vec![
                scalar(a).ok_or_else(|| self.malformed("bad label"))?,
                scalar(b).ok_or_else(|| self.malformed("bad count"))?,
            ]),
            _ => Err(self.malformed("expected [label, count] pairs")),
        }
    }

    fn venn_rows(&self, section: &Value) -> Result<Vec<Vec<String>>, ExportError> {
        let labels: Vec<String> = self
            .array(&section["labels"])?
            .iter()
            .map(|l| scalar(l).ok_or_else(|| self.malformed("bad label")))
            .collect::<Result<_, _>>()?;
        let regions = section["regions"].as_object().ok_or_else(|| self.malformed("regions missing"))?;
        let mut counts: Vec<(u8, u64)> = Vec::new();
        for (k, v) in regions {
            let mask: u8 = k.parse().map_err(|_| self.malformed("bad region mask"))?;
            counts.push((mask, v.as_u64().ok_or_else(|| self.malformed("bad region count"))?));
        }
        counts.sort_by_key(|(m, _)| (m.count_ones(), *m));
        Ok(counts
            .iter()
            .map(|(mask, exclusive)| {
                let name: Vec<&str> = (0..labels.len())
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| labels[i].as_str())
                    .collect();
                let inclusive: u64 = counts.iter().filter(|(m, _)| m & mask == *mask).map(|(_, c)| c).sum();
                vec![name.join(" & "), exclusive.to_string(), inclusive.to_string()]
            })
            .collect())
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Writes the requested figures, or every figure the report has a section
/// for when `names` is empty, into `dir`.
pub fn figure_export(report: &Value, names: &[String], dir: &Path) -> Result<Vec<PathBuf>, super::CliError> {
    let figures: Vec<&Figure> = if names.is_empty() {
        FIGURES.iter().filter(|f| f.is_present(report)).collect()
    } else {
        names.iter().map(|n| figure(n)).collect::<Result<_, _>>()?
    };
    if figures.is_empty() {
        return Err(ExportError::MissingSection("any figure section".into()).into());
    }
    let rendered: Vec<(String, String)> = figures
        .iter()
        .map(|f| Ok((f.file_name(), f.render(report)?)))
        .collect::<Result<_, ExportError>>()?;
    fs::create_dir_all(dir).map_err(|e| super::CliError::io(dir, e))?;
    let mut out = Vec::new();
    for (name, csv) in rendered {
        let path = dir.join(name);
        fs::write(&path, csv).map_err(|e| super::CliError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ranked_and_empty_sections() {
        let r = json!({"ports": [["22", 5], ["80", 2]], "campaigns": []});
        assert_eq!(figure("ports").unwrap().render(&r).unwrap(), "port,ips\n22,5\n80,2\n");
        assert_eq!(figure("campaigns").unwrap().render(&r).unwrap(), "campaign,ips\n");
    }

    #[test]
    fn missing_section_is_reported() {
        let r = json!({"ports": []});
        assert_eq!(
            figure("jarms").unwrap().render(&r),
            Err(ExportError::MissingSection("jarm_clusters".into()))
        );
        assert_eq!(
            figure("tlds").unwrap().render(&json!({"sinkhole": {}})),
            Err(ExportError::MissingSection("sinkhole.tld_counts".into()))
        );
    }

    #[test]
    fn venn_rows_carry_exclusive_and_inclusive_counts() {
        let r = json!({"intersection": {"labels": ["a", "b"], "regions": {"1": 3, "2": 4, "3": 2}}});
        let csv = figure("crawl_overlap").unwrap().render(&r).unwrap();
        assert_eq!(csv, "region,exclusive,inclusive\na,3,5\nb,4,6\na & b,2,2\n");
    }

    #[test]
    fn crawl_rows() {
        let r = json!({"crawls": [{"label": "c1", "malicious": 2, "benign": 3, "total": 5}]});
        assert_eq!(
            figure("malicious_per_crawl").unwrap().render(&r).unwrap(),
            "crawl,malicious,benign,total\nc1,2,3,5\n"
        );
    }
}
