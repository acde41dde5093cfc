use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::cases::CaseSeries;
use crate::error::{Error, Result};

/// Read `date,region,cases` rows into one gap-free series per region, in
/// the order of `regions`.
pub fn ingest(path: &Path, regions: &[String]) -> Result<Vec<CaseSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, regions)
}

pub fn ingest_reader<R: Read>(reader: R, path: &Path, regions: &[String]) -> Result<Vec<CaseSeries>> {
    let err = |line: u64, message: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_lowercase).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(1, format!("missing column {name:?}; expected date,region,cases")))
    };
    let (c_date, c_region, c_cases) = (col("date")?, col("region")?, col("cases")?);

    let mut by_region: Vec<BTreeMap<NaiveDate, (u64, u64)>> = vec![BTreeMap::new(); regions.len()];
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d")
            .map_err(|e| err(line, format!("bad date {:?}: {e}", field(c_date))))?;
        let region = field(c_region);
        let r = regions
            .iter()
            .position(|n| n == region)
            .ok_or_else(|| err(line, format!("unknown region {region:?}")))?;
        let raw = field(c_cases);
        let value: i64 = raw
            .parse()
            .map_err(|_| err(line, format!("cases {raw:?} is not an integer")))?;
        if value < 0 {
            return Err(err(line, format!("negative count {value} for {region} on {date}")));
        }
        if let Some((_, first)) = by_region[r].insert(date, (value as u64, line)) {
            return Err(err(
                line,
                format!("duplicate record for {region} on {date} (first on line {first})"),
            ));
        }
    }

    regions
        .iter()
        .zip(by_region)
        .map(|(name, rows)| {
            let Some((&start, _)) = rows.iter().next() else {
                return Err(Error::Ingest {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("no records for region {name}"),
                });
            };
            let mut expected = start;
            let mut counts = Vec::with_capacity(rows.len());
            for (date, (count, line)) in rows {
                if date != expected {
                    return Err(err(
                        line,
                        format!("gap in {name}: no record between {expected} and {date}"),
                    ));
                }
                counts.push(count);
                expected = date.succ_opt().expect("date in range");
            }
            Ok(CaseSeries::new(name.clone(), start, counts))
        })
        .collect()
}

/// Write series in the ingest schema.
pub fn write_cases<W: Write>(series: &[CaseSeries], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "region", "cases"])?;
    for s in series {
        for (date, c) in s.records() {
            out.write_record([date.to_string(), s.region.clone(), c.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("case output", e))?;
    Ok(())
}

/// Daily sum across aligned regional series, labelled `label`.
pub fn aggregate_provincial(series: &[CaseSeries], label: &str) -> Result<CaseSeries> {
    CaseSeries::sum(series, label)
}
