//! CSV schemas.
//!
//! * Vol surface: `maturity_years,strike_ratio,vol,df`
//! * Index history: `date,level`
//! * Premium quotes: `date,premium_annual`
//! * Density / belief / payoff samples: `x,value`
//! * Investors: `weight,belief_csv_path` (paths relative to the file)
//!
//! Dates are ISO-8601, decimal points throughout, no thousands separators.
//! Lines starting with `#` are comments; writers emit one as the first
//! line when asked (the CLI puts its version and config hash there).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::historical::ReturnSeries;
use crate::market::VolSurface;
use crate::premium::{DatedSurface, PremiumQuote};

const DATE_FMT: &str = "%Y-%m-%d";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse::<f64>().map_err(|_| {
        malformed(
            path,
            record_line(record),
            format!("cannot parse {name} from `{raw}`"),
        )
    })
}

fn parse_date(path: &Path, record: &csv::StringRecord, idx: usize) -> Result<NaiveDate> {
    let raw = record.get(idx).unwrap_or("");
    NaiveDate::parse_from_str(raw, DATE_FMT).map_err(|_| {
        malformed(
            path,
            record_line(record),
            format!("cannot parse ISO date from `{raw}`"),
        )
    })
}

fn expect_fields(path: &Path, record: &csv::StringRecord, n: usize) -> Result<()> {
    if record.len() != n {
        return Err(malformed(
            path,
            record_line(record),
            format!("expected {n} fields, got {}", record.len()),
        ));
    }
    Ok(())
}

/// Reads a vol surface from `maturity_years,strike_ratio,vol,df` rows.
/// Rows may arrive in any order; they are grouped by maturity and each
/// maturity must quote a single consistent discount factor.
pub fn read_surface_csv(path: &Path) -> Result<VolSurface> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["maturity_years", "strike_ratio", "vol", "df"])?;
    struct Smile {
        df: f64,
        quotes: Vec<(f64, f64)>,
        line: usize,
    }
    let mut by_maturity: BTreeMap<u64, Smile> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        expect_fields(path, &record, 4)?;
        let line = record_line(&record);
        let maturity = parse_f64(path, &record, 0, "maturity_years")?;
        let ratio = parse_f64(path, &record, 1, "strike_ratio")?;
        let vol = parse_f64(path, &record, 2, "vol")?;
        let df = parse_f64(path, &record, 3, "df")?;
        if !(maturity > 0.0) {
            return Err(malformed(path, line, format!("maturity must be > 0, got {maturity}")));
        }
        let entry = by_maturity.entry(maturity.to_bits()).or_insert(Smile {
            df,
            quotes: Vec::new(),
            line,
        });
        if entry.df != df {
            return Err(malformed(
                path,
                line,
                format!(
                    "maturity {maturity} quotes two discount factors ({} and {df})",
                    entry.df
                ),
            ));
        }
        entry.quotes.push((ratio, vol));
    }
    if by_maturity.is_empty() {
        return Err(malformed(path, 1, "surface file has no quote rows"));
    }
    let mut maturities = Vec::new();
    let mut dfs = Vec::new();
    let mut strike_ratios = Vec::new();
    let mut vols = Vec::new();
    for (bits, mut smile) in by_maturity {
        smile
            .quotes
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in smile.quotes.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(malformed(
                    path,
                    smile.line,
                    format!(
                        "duplicate strike ratio {} at maturity {}",
                        pair[0].0,
                        f64::from_bits(bits)
                    ),
                ));
            }
        }
        maturities.push(f64::from_bits(bits));
        dfs.push(smile.df);
        strike_ratios.push(smile.quotes.iter().map(|q| q.0).collect());
        vols.push(smile.quotes.iter().map(|q| q.1).collect());
    }
    VolSurface::new(maturities, dfs, strike_ratios, vols)
        .map_err(|e| malformed(path, 0, e.to_string()))
}

pub fn write_surface_csv<W: Write>(
    mut w: W,
    surface: &VolSurface,
    comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = comment {
        writeln!(w, "# {comment}")?;
    }
    writeln!(w, "maturity_years,strike_ratio,vol,df")?;
    for (maturity, ratio, vol, df) in surface.quotes() {
        writeln!(w, "{maturity},{ratio},{vol},{df}")?;
    }
    Ok(())
}

/// Reads an index history from `date,level` rows.
pub fn read_index_csv(path: &Path) -> Result<ReturnSeries> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["date", "level"])?;
    let mut dates = Vec::new();
    let mut levels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        expect_fields(path, &record, 2)?;
        dates.push(parse_date(path, &record, 0)?);
        levels.push(parse_f64(path, &record, 1, "level")?);
    }
    ReturnSeries::new(dates, levels).map_err(|e| malformed(path, 0, e.to_string()))
}

pub fn write_index_csv<W: Write>(
    mut w: W,
    series: &ReturnSeries,
    comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = comment {
        writeln!(w, "# {comment}")?;
    }
    writeln!(w, "date,level")?;
    for (date, level) in series.dates().iter().zip(series.levels()) {
        writeln!(w, "{},{level}", date.format(DATE_FMT))?;
    }
    Ok(())
}

/// Reads premium quotes from `date,premium_annual` rows; every quote gets
/// the supplied horizon.
pub fn read_premium_quotes_csv(path: &Path, horizon_years: f64) -> Result<Vec<PremiumQuote>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["date", "premium_annual"])?;
    let mut quotes = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        expect_fields(path, &record, 2)?;
        let date = parse_date(path, &record, 0)?;
        let premium = parse_f64(path, &record, 1, "premium_annual")?;
        quotes.push(
            PremiumQuote::new(date, premium, horizon_years)
                .map_err(|e| malformed(path, record_line(&record), e.to_string()))?,
        );
    }
    Ok(quotes)
}

/// Reads `x,value` samples, e.g. a density or payoff curve.
pub fn read_samples_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["x", "value"])?;
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        expect_fields(path, &record, 2)?;
        xs.push(parse_f64(path, &record, 0, "x")?);
        values.push(parse_f64(path, &record, 1, "value")?);
    }
    if xs.is_empty() {
        return Err(malformed(path, 1, "no sample rows"));
    }
    Ok((xs, values))
}

pub fn write_samples_csv<W: Write>(
    mut w: W,
    xs: &[f64],
    values: &[f64],
    comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = comment {
        writeln!(w, "# {comment}")?;
    }
    writeln!(w, "x,value")?;
    for (x, v) in xs.iter().zip(values) {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

/// Reads an investors file, `weight,belief_csv_path`, resolving relative
/// belief paths against the directory of the investors file itself.
pub fn read_investors_csv(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["weight", "belief_csv_path"])?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut investors = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(path, 0, e.to_string()))?;
        expect_fields(path, &record, 2)?;
        let weight = parse_f64(path, &record, 0, "weight")?;
        let raw_path = record.get(1).unwrap_or("");
        if raw_path.is_empty() {
            return Err(malformed(path, record_line(&record), "empty belief path"));
        }
        let belief_path = PathBuf::from(raw_path);
        let belief_path = if belief_path.is_absolute() {
            belief_path
        } else {
            base.join(belief_path)
        };
        investors.push((weight, belief_path));
    }
    if investors.is_empty() {
        return Err(malformed(path, 1, "no investor rows"));
    }
    Ok(investors)
}

/// Loads every `*.csv` surface in a directory whose file stem is an ISO
/// date, sorted by date.
pub fn read_dated_surfaces_dir(dir: &Path) -> Result<Vec<DatedSurface>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut surfaces = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s,
            None => continue,
        };
        let date = NaiveDate::parse_from_str(stem, DATE_FMT).map_err(|_| {
            malformed(&path, 0, "surface file names must be ISO dates (YYYY-MM-DD.csv)")
        })?;
        surfaces.push(DatedSurface {
            date,
            surface: read_surface_csv(&path)?,
        });
    }
    if surfaces.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no surface files found in {}",
            dir.display()
        )));
    }
    surfaces.sort_by_key(|s| s.date);
    Ok(surfaces)
}
