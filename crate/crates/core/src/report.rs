//! Plot-ready columns for budget curves.

use crate::adaptive::{fit_points, line_fit, BudgetCurve, RateReport};

/// Envelope points in the report's window with log2 columns and the fitted
/// line. The `slope` column repeats the decay rate s of the report.
pub fn emit_plot_data(curve: &BudgetCurve, report: &RateReport) -> String {
    let pts = fit_points(curve, Some((report.n_lo, report.n_hi)));
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(n, e)| ((n as f64).log2(), e.log2())).collect();
    let (slope, icpt, _) = line_fit(&logs);
    let mut s = String::from("N,error,log2_N,log2_E,fit_log2_E,slope\n");
    for (&(n, e), &(ln, le)) in pts.iter().zip(&logs) {
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            n,
            e,
            ln,
            le,
            icpt + slope * ln,
            report.s
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{fit_rate, CurveSample};

    fn curve() -> BudgetCurve {
        BudgetCurve {
            samples: (0..6)
                .map(|k| CurveSample {
                    n: 4 << (2 * k),
                    error: 2f64.powi(-(k as i32)),
                    epsilon: 1.0,
                    surrogate: false,
                })
                .collect(),
            backend: "synthetic".into(),
            ledgers: vec![],
            truncated: false,
        }
    }

    #[test]
    fn exact_columns_and_stable() {
        let c = curve();
        let r = fit_rate(&c, None).unwrap();
        let a = emit_plot_data(&c, &r);
        assert_eq!(a, emit_plot_data(&c, &r));
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "4,1.000000000000e0,2.000000000000e0,0.000000000000e0,0.000000000000e0,5.000000000000e-1");
        for l in &lines[1..] {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            assert!((f[3] - f[4]).abs() < 1e-12);
            assert_eq!(l.rsplit(',').next().unwrap(), format!("{:.12e}", r.s));
        }
    }
}
