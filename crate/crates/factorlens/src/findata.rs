//! Price-to-normalized-log-return preprocessing.
//!
//! Starting from a complete table of adjusted close prices (one row per
//! trading day, one column per stock), the pipeline:
//!
//! 1. computes raw log daily returns `log(p_{j+1} / p_j)`;
//! 2. finds global two-sided clip bounds: the smallest observed value that
//!    at least 99.5% of all returns do not exceed, and the largest value
//!    that at least 99.5% are not below (order statistics over the pooled
//!    matrix);
//! 3. clips every return into those bounds;
//! 4. estimates per-stock volatility on day j as the root mean square of the
//!    previous 50 clipped returns;
//! 5. emits normalized rows: clipped return divided by same-day volatility,
//!    starting at return-day 51.
//!
//! A table with `T` price days therefore yields `T - 51` output rows. Given
//! the clip bounds, output row n depends only on days up to n + 50; the
//! bounds themselves are global constants of the supplied table (pass
//! [`PreprocessOptions::fixed_bounds`] to pin them externally, e.g. when
//! re-running on sliding windows).

use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Volatility window length in trading days.
pub const VOLATILITY_WINDOW: usize = 50;

/// Fraction of returns that must lie inside each clip bound.
pub const CLIP_COVERAGE: f64 = 0.995;

/// A complete table of strictly positive adjusted close prices.
#[derive(Debug, Clone)]
pub struct PriceTable {
    prices: DMatrix<f64>,
    tickers: Vec<String>,
    dates: Vec<String>,
}

impl PriceTable {
    pub fn new(prices: DMatrix<f64>, tickers: Vec<String>, dates: Vec<String>) -> Result<Self> {
        if prices.nrows() == 0 || prices.ncols() == 0 {
            return Err(Error::input("price table must be non-empty"));
        }
        if tickers.len() != prices.ncols() {
            return Err(Error::input(format!(
                "{} tickers for {} price columns",
                tickers.len(),
                prices.ncols()
            )));
        }
        if dates.len() != prices.nrows() {
            return Err(Error::input(format!(
                "{} dates for {} price rows",
                dates.len(),
                prices.nrows()
            )));
        }
        for j in 0..prices.ncols() {
            for i in 0..prices.nrows() {
                let p = prices[(i, j)];
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::input(format!(
                        "nonpositive or non-finite price for {} on {}",
                        tickers[j], dates[i]
                    )));
                }
            }
        }
        Ok(PriceTable {
            prices,
            tickers,
            dates,
        })
    }

    pub fn days(&self) -> usize {
        self.prices.nrows()
    }

    pub fn stocks(&self) -> usize {
        self.prices.ncols()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    /// Read a price CSV: header row of tickers with a leading date-column
    /// label, then one row per day with the date in the first cell.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::input(format!("{}: empty file", path.display())))??;
        let tickers: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        if tickers.is_empty() {
            return Err(Error::input(format!(
                "{}: header has no ticker columns",
                path.display()
            )));
        }
        let mut dates = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let date = cells
                .next()
                .ok_or_else(|| Error::input(format!("{}:{}: empty row", path.display(), lineno + 2)))?
                .trim()
                .to_string();
            let prices: Vec<f64> = cells
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| {
                        Error::input(format!(
                            "{}:{}: cannot parse {c:?} as a price",
                            path.display(),
                            lineno + 2
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if prices.len() != tickers.len() {
                return Err(Error::input(format!(
                    "{}:{}: expected {} prices, found {}",
                    path.display(),
                    lineno + 2,
                    tickers.len(),
                    prices.len()
                )));
            }
            dates.push(date);
            rows.push(prices);
        }
        if rows.is_empty() {
            return Err(Error::input(format!("{}: no data rows", path.display())));
        }
        let mat = DMatrix::from_fn(rows.len(), tickers.len(), |i, j| rows[i][j]);
        PriceTable::new(mat, tickers, dates)
    }
}

/// Two-sided clipping interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Pipeline policy knobs.
#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    /// Use these bounds instead of computing them from the table.
    pub fixed_bounds: Option<ClipBounds>,
    /// Drop stocks with a zero-volatility window instead of erroring.
    pub drop_degenerate: bool,
}

/// The normalized return panel and its provenance.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    /// N x M normalized log-daily-returns, N = T - 51.
    pub returns: Dataset,
    /// Matching N x M volatility denominators.
    pub volatility: DMatrix<f64>,
    /// Tickers of the surviving columns.
    pub tickers: Vec<String>,
    pub clip_bounds: ClipBounds,
    /// Fractions of raw returns strictly above/below the bounds.
    pub clipped_above: f64,
    pub clipped_below: f64,
    /// Tickers dropped under the drop-degenerate policy.
    pub dropped: Vec<String>,
}

impl ReturnPanel {
    /// JSON metadata sidecar: clip bounds, clipped fractions, drops.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "clip_lower": self.clip_bounds.lower,
            "clip_upper": self.clip_bounds.upper,
            "clipped_above_fraction": self.clipped_above,
            "clipped_below_fraction": self.clipped_below,
            "rows": self.returns.n(),
            "stocks": self.tickers,
            "dropped": self.dropped,
            "volatility_window": VOLATILITY_WINDOW,
        })
    }
}

/// Run the full preprocessing pipeline.
pub fn preprocess_prices(table: &PriceTable, opts: &PreprocessOptions) -> Result<ReturnPanel> {
    let t_days = table.days();
    let m = table.stocks();
    if t_days < VOLATILITY_WINDOW + 2 {
        return Err(Error::input(format!(
            "need at least {} price days (a {}-day volatility window plus one return), got {t_days}",
            VOLATILITY_WINDOW + 2,
            VOLATILITY_WINDOW
        )));
    }
    let r_days = t_days - 1;

    // Raw log daily returns.
    let mut raw = DMatrix::zeros(r_days, m);
    for j in 0..m {
        for d in 0..r_days {
            raw[(d, j)] = (table.prices()[(d + 1, j)] / table.prices()[(d, j)]).ln();
        }
    }

    let bounds = match opts.fixed_bounds {
        Some(b) => {
            if !(b.lower <= b.upper) {
                return Err(Error::parameter("clip bounds must satisfy lower <= upper"));
            }
            b
        }
        None => clip_bounds_of(raw.as_slice()),
    };
    let total = (r_days * m) as f64;
    let clipped_above = raw.iter().filter(|&&v| v > bounds.upper).count() as f64 / total;
    let clipped_below = raw.iter().filter(|&&v| v < bounds.lower).count() as f64 / total;

    let clipped = raw.map(|v| v.clamp(bounds.lower, bounds.upper));

    // Volatility on return-day d (0-based, d >= 50): rms of the previous 50
    // clipped returns. Output row n (0-based) covers return-day n + 50.
    let n_out = r_days - VOLATILITY_WINDOW;
    let mut vol = DMatrix::zeros(n_out, m);
    let mut degenerate: Vec<(usize, usize)> = Vec::new();
    for j in 0..m {
        // Rolling sum of squares over the window.
        let mut acc: f64 = (0..VOLATILITY_WINDOW).map(|d| clipped[(d, j)].powi(2)).sum();
        for n in 0..n_out {
            let v = (acc / VOLATILITY_WINDOW as f64).sqrt();
            if v == 0.0 {
                degenerate.push((j, n + VOLATILITY_WINDOW));
            }
            vol[(n, j)] = v;
            let leaving = clipped[(n, j)].powi(2);
            let entering = clipped[(n + VOLATILITY_WINDOW, j)].powi(2);
            acc += entering - leaving;
            // Rolling subtraction can drift slightly negative.
            if acc < 0.0 {
                acc = 0.0;
            }
        }
    }

    let (keep, dropped): (Vec<usize>, Vec<String>) = if degenerate.is_empty() {
        ((0..m).collect(), Vec::new())
    } else if opts.drop_degenerate {
        let bad: std::collections::BTreeSet<usize> =
            degenerate.iter().map(|&(j, _)| j).collect();
        if bad.len() == m {
            return Err(Error::Degenerate(
                "every stock has a zero-volatility window".into(),
            ));
        }
        (
            (0..m).filter(|j| !bad.contains(j)).collect(),
            bad.iter().map(|&j| table.tickers()[j].clone()).collect(),
        )
    } else {
        let mut examples: Vec<String> = degenerate
            .iter()
            .take(5)
            .map(|&(j, d)| format!("{} at return-day {}", table.tickers()[j], d + 1))
            .collect();
        if degenerate.len() > 5 {
            examples.push(format!("... {} more", degenerate.len() - 5));
        }
        return Err(Error::Degenerate(format!(
            "zero-volatility window for: {} (rerun with drop-degenerate to exclude these stocks)",
            examples.join(", ")
        )));
    };

    let mut out = DMatrix::zeros(n_out, keep.len());
    let mut out_vol = DMatrix::zeros(n_out, keep.len());
    for (col, &j) in keep.iter().enumerate() {
        for n in 0..n_out {
            out[(n, col)] = clipped[(n + VOLATILITY_WINDOW, j)] / vol[(n, j)];
            out_vol[(n, col)] = vol[(n, j)];
        }
    }
    let tickers = keep.iter().map(|&j| table.tickers()[j].clone()).collect();

    Ok(ReturnPanel {
        returns: Dataset::new(out)?,
        volatility: out_vol,
        tickers,
        clip_bounds: bounds,
        clipped_above,
        clipped_below,
        dropped,
    })
}

/// Order-statistic clip bounds over the pooled values: the upper bound is
/// the smallest observed value v with at least 99.5% of values <= v; the
/// lower bound is the largest observed value with at least 99.5% >= it.
fn clip_bounds_of(values: &[f64]) -> ClipBounds {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
    let p = sorted.len();
    let k = (CLIP_COVERAGE * p as f64).ceil() as usize;
    ClipBounds {
        upper: sorted[k - 1],
        lower: sorted[p - k],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_growth_table(t_days: usize, stocks: usize, rate: f64) -> PriceTable {
        let prices = DMatrix::from_fn(t_days, stocks, |i, j| {
            100.0 * (j as f64 + 1.0) * rate.powi(i as i32)
        });
        PriceTable::new(
            prices,
            (0..stocks).map(|j| format!("S{j}")).collect(),
            (0..t_days).map(|i| format!("d{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn doubling_prices_normalize_to_one() {
        // Every raw return is log 2, the volatility is log 2, so every
        // normalized return is exactly 1.
        let table = constant_growth_table(60, 2, 2.0);
        let panel = preprocess_prices(&table, &PreprocessOptions::default()).unwrap();
        assert_eq!(panel.returns.n(), 60 - 51);
        for v in panel.returns.samples().iter() {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-12);
        }
        for v in panel.volatility.iter() {
            assert_relative_eq!(*v, 2f64.ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn output_row_count_is_days_minus_51() {
        let table = constant_growth_table(123, 3, 1.01);
        let panel = preprocess_prices(&table, &PreprocessOptions::default()).unwrap();
        assert_eq!(panel.returns.n(), 123 - 51);
        assert!(preprocess_prices(
            &constant_growth_table(51, 2, 1.01),
            &PreprocessOptions::default()
        )
        .is_err());
    }

    #[test]
    fn spike_is_clipped_and_coverage_holds() {
        // One extreme up-move in an otherwise gentle random walk.
        let t_days = 220;
        let mut prices = DMatrix::from_fn(t_days, 3, |i, j| {
            100.0 * (1.0 + 0.001 * ((i * 7 + j * 3) % 13) as f64).powi(i as i32)
        });
        // Inject the spike on one stock mid-series.
        for d in 120..t_days {
            prices[(d, 1)] *= 10.0_f64;
        }
        let table = PriceTable::new(
            prices,
            vec!["A".into(), "B".into(), "C".into()],
            (0..t_days).map(|i| format!("d{i}")).collect(),
        )
        .unwrap();
        let panel = preprocess_prices(&table, &PreprocessOptions::default()).unwrap();
        // At most 0.5% of raw returns are strictly beyond each bound.
        assert!(panel.clipped_above <= 0.005 + 1e-12);
        assert!(panel.clipped_below <= 0.005 + 1e-12);
        // The spike return itself was clipped to the upper bound.
        assert!(panel.clip_bounds.upper < 10f64.ln());
    }

    #[test]
    fn no_lookahead_given_fixed_bounds() {
        // With the clip bounds pinned, perturbing a late price must not
        // change early output rows.
        let table = constant_growth_table(80, 2, 1.02);
        let bounds = ClipBounds {
            lower: -1.0,
            upper: 1.0,
        };
        let opts = PreprocessOptions {
            fixed_bounds: Some(bounds),
            drop_degenerate: false,
        };
        let base = preprocess_prices(&table, &opts).unwrap();

        let mut prices = table.prices().clone();
        prices[(79, 1)] *= 1.5;
        let bumped = PriceTable::new(
            prices,
            table.tickers().to_vec(),
            table.dates().to_vec(),
        )
        .unwrap();
        let bumped = preprocess_prices(&bumped, &opts).unwrap();

        // Output rows 0..n-2 are untouched (the final row sees day 80's
        // return; everything earlier uses only days <= n+50).
        let n = base.returns.n();
        for row in 0..n - 1 {
            for col in 0..2 {
                assert_eq!(
                    base.returns.samples()[(row, col)],
                    bumped.returns.samples()[(row, col)],
                    "lookahead at row {row}"
                );
            }
        }
        assert_ne!(
            base.returns.samples()[(n - 1, 1)],
            bumped.returns.samples()[(n - 1, 1)]
        );
    }

    #[test]
    fn flat_stock_errors_or_drops() {
        // A perfectly flat price series has zero volatility everywhere.
        let mut prices = DMatrix::from_fn(70, 2, |i, _| 100.0 * 1.01f64.powi(i as i32));
        for d in 0..70 {
            prices[(d, 1)] = 50.0;
        }
        let table = PriceTable::new(
            prices,
            vec!["OK".into(), "FLAT".into()],
            (0..70).map(|i| format!("d{i}")).collect(),
        )
        .unwrap();
        let err = preprocess_prices(&table, &PreprocessOptions::default());
        assert!(matches!(err, Err(Error::Degenerate(_))));

        let panel = preprocess_prices(
            &table,
            &PreprocessOptions {
                fixed_bounds: None,
                drop_degenerate: true,
            },
        )
        .unwrap();
        assert_eq!(panel.dropped, vec!["FLAT".to_string()]);
        assert_eq!(panel.tickers, vec!["OK".to_string()]);
        assert_eq!(panel.returns.m(), 1);
    }

    #[test]
    fn rejects_nonpositive_prices() {
        let prices = DMatrix::from_fn(60, 1, |i, _| if i == 30 { 0.0 } else { 10.0 });
        assert!(PriceTable::new(prices, vec!["X".into()], (0..60).map(|i| i.to_string()).collect()).is_err());
    }

    #[test]
    fn deterministic_output() {
        let table = constant_growth_table(90, 4, 1.005);
        let a = preprocess_prices(&table, &PreprocessOptions::default()).unwrap();
        let b = preprocess_prices(&table, &PreprocessOptions::default()).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.clip_bounds, b.clip_bounds);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("factorlens_findata_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prices.csv");
        std::fs::write(&path, "date,AAA,BBB\n2001-01-01,10.0,20.0\n2001-01-02,10.5,19.5\n")
            .unwrap();
        let table = PriceTable::read_csv(&path).unwrap();
        assert_eq!(table.tickers(), &["AAA".to_string(), "BBB".to_string()]);
        assert_eq!(table.days(), 2);
        assert_eq!(table.prices()[(1, 0)], 10.5);
    }
}
