//! Plain-text epoch file format.
//!
//! Line-oriented, whitespace-delimited, `#` starts a comment line:
//!
//! ```text
//! lambda <meters>
//! sats <S+1>
//! baselines <A>
//! xb <row-major q x A values>
//! los <s> <x> <y> <z>          # s = 0..S, unit vectors
//! dd <a> <s> <psi> <rho>       # a = 1..A, s = 1..S, cycles
//! ntrue <a> <s> <integer>      # optional true ambiguities
//! ```
//!
//! Floats are written with 17 significant digits so parse/serialize is an
//! exact round trip.

use nalgebra::{DMatrix, Vector3};

use crate::error::Error;
use crate::obs_model::{
    build_dd_covariance, ArrayGeometry, DdEpoch, DesignMatrix, LosSet,
};
use crate::Result;

#[derive(Debug, Clone)]
pub struct EpochFile {
    pub wavelength: f64,
    /// Unit line-of-sight vectors, reference satellite first.
    pub los: Vec<Vector3<f64>>,
    /// Body-frame baseline matrix, `min(3, A) x A`.
    pub xb: DMatrix<f64>,
    /// Double-difference phase, `S x A`, cycles.
    pub phase: DMatrix<f64>,
    /// Double-difference pseudo-range, `S x A`, cycles.
    pub code: DMatrix<f64>,
    pub n_true: Option<DMatrix<i64>>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what}: '{tok}'")))
}

impl EpochFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut wavelength: Option<f64> = None;
        let mut sats: Option<usize> = None;
        let mut baselines: Option<usize> = None;
        let mut xb_values: Option<(Vec<f64>, usize)> = None;
        let mut los_lines: Vec<(usize, usize, Vector3<f64>)> = Vec::new();
        let mut dd_lines: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
        let mut ntrue_lines: Vec<(usize, usize, usize, i64)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "lambda" => {
                    if toks.len() != 2 {
                        return Err(parse_err(lno, "lambda takes one value"));
                    }
                    wavelength = Some(parse_num(toks[1], lno, "wavelength")?);
                }
                "sats" => {
                    if toks.len() != 2 {
                        return Err(parse_err(lno, "sats takes one value"));
                    }
                    sats = Some(parse_num(toks[1], lno, "satellite count")?);
                }
                "baselines" => {
                    if toks.len() != 2 {
                        return Err(parse_err(lno, "baselines takes one value"));
                    }
                    baselines = Some(parse_num(toks[1], lno, "baseline count")?);
                }
                "xb" => {
                    let vals: Result<Vec<f64>> = toks[1..]
                        .iter()
                        .map(|t| parse_num(t, lno, "xb entry"))
                        .collect();
                    xb_values = Some((vals?, lno));
                }
                "los" => {
                    if toks.len() != 5 {
                        return Err(parse_err(lno, "los needs: index x y z"));
                    }
                    let s: usize = parse_num(toks[1], lno, "los index")?;
                    let v = Vector3::new(
                        parse_num(toks[2], lno, "los x")?,
                        parse_num(toks[3], lno, "los y")?,
                        parse_num(toks[4], lno, "los z")?,
                    );
                    los_lines.push((lno, s, v));
                }
                "dd" => {
                    if toks.len() != 5 {
                        return Err(parse_err(lno, "dd needs: baseline sat psi rho"));
                    }
                    dd_lines.push((
                        lno,
                        parse_num(toks[1], lno, "dd baseline index")?,
                        parse_num(toks[2], lno, "dd satellite index")?,
                        parse_num(toks[3], lno, "dd phase")?,
                        parse_num(toks[4], lno, "dd code")?,
                    ));
                }
                "ntrue" => {
                    if toks.len() != 4 {
                        return Err(parse_err(lno, "ntrue needs: baseline sat integer"));
                    }
                    ntrue_lines.push((
                        lno,
                        parse_num(toks[1], lno, "ntrue baseline index")?,
                        parse_num(toks[2], lno, "ntrue satellite index")?,
                        parse_num(toks[3], lno, "ntrue value")?,
                    ));
                }
                other => return Err(parse_err(lno, format!("unknown keyword '{other}'"))),
            }
        }

        let wavelength = wavelength.ok_or_else(|| parse_err(0, "missing 'lambda' header"))?;
        let n_sats = sats.ok_or_else(|| parse_err(0, "missing 'sats' header"))?;
        let a = baselines.ok_or_else(|| parse_err(0, "missing 'baselines' header"))?;
        if n_sats < 2 || a < 1 {
            return Err(parse_err(0, "need at least 2 satellites and 1 baseline"));
        }
        let s = n_sats - 1;
        let q = a.min(3);

        let (xb_vals, xb_line) =
            xb_values.ok_or_else(|| parse_err(0, "missing 'xb' header"))?;
        if xb_vals.len() != q * a {
            return Err(parse_err(
                xb_line,
                format!("xb needs {} values (q x A row-major), got {}", q * a, xb_vals.len()),
            ));
        }
        let xb = DMatrix::from_row_slice(q, a, &xb_vals);

        let mut los = vec![None; n_sats];
        for (lno, s_idx, v) in los_lines {
            if s_idx >= n_sats {
                return Err(parse_err(lno, format!("los index {s_idx} out of range")));
            }
            if los[s_idx].replace(v).is_some() {
                return Err(parse_err(lno, format!("duplicate los index {s_idx}")));
            }
        }
        let los: Vec<Vector3<f64>> = los
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| parse_err(0, format!("missing los line for satellite {i}"))))
            .collect::<Result<_>>()?;

        let mut phase = DMatrix::from_element(s, a, f64::NAN);
        let mut code = DMatrix::from_element(s, a, f64::NAN);
        for (lno, ai, si, psi, rho) in dd_lines {
            if ai < 1 || ai > a || si < 1 || si > s {
                return Err(parse_err(lno, format!("dd index ({ai}, {si}) out of range")));
            }
            if !phase[(si - 1, ai - 1)].is_nan() {
                return Err(parse_err(lno, format!("duplicate dd entry ({ai}, {si})")));
            }
            phase[(si - 1, ai - 1)] = psi;
            code[(si - 1, ai - 1)] = rho;
        }
        if phase.iter().any(|x| x.is_nan()) {
            return Err(parse_err(0, "incomplete dd observations"));
        }

        let n_true = if ntrue_lines.is_empty() {
            None
        } else {
            let mut n = DMatrix::from_element(s, a, i64::MIN);
            for (lno, ai, si, v) in ntrue_lines {
                if ai < 1 || ai > a || si < 1 || si > s {
                    return Err(parse_err(lno, format!("ntrue index ({ai}, {si}) out of range")));
                }
                n[(si - 1, ai - 1)] = v;
            }
            if n.iter().any(|&x| x == i64::MIN) {
                return Err(parse_err(0, "incomplete ntrue lines"));
            }
            Some(n)
        };

        Ok(Self {
            wavelength,
            los,
            xb,
            phase,
            code,
            n_true,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let f = |x: f64| format!("{x:.16e}");
        out.push_str(&format!("lambda {}\n", f(self.wavelength)));
        out.push_str(&format!("sats {}\n", self.los.len()));
        out.push_str(&format!("baselines {}\n", self.xb.ncols()));
        let xb_row_major: Vec<String> = (0..self.xb.nrows())
            .flat_map(|i| (0..self.xb.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| f(self.xb[(i, j)]))
            .collect();
        out.push_str(&format!("xb {}\n", xb_row_major.join(" ")));
        for (i, v) in self.los.iter().enumerate() {
            out.push_str(&format!("los {} {} {} {}\n", i, f(v.x), f(v.y), f(v.z)));
        }
        for a in 0..self.xb.ncols() {
            for s in 0..self.phase.nrows() {
                out.push_str(&format!(
                    "dd {} {} {} {}\n",
                    a + 1,
                    s + 1,
                    f(self.phase[(s, a)]),
                    f(self.code[(s, a)])
                ));
            }
        }
        if let Some(n) = &self.n_true {
            for a in 0..n.ncols() {
                for s in 0..n.nrows() {
                    out.push_str(&format!("ntrue {} {} {}\n", a + 1, s + 1, n[(s, a)]));
                }
            }
        }
        out
    }

    /// Builds solver inputs. The file carries no noise model, so the
    /// weighting sigmas come from the caller (CLI flags).
    pub fn to_solver_inputs(
        &self,
        sigma_phase_m: f64,
        variance_ratio: f64,
    ) -> Result<(DdEpoch, DesignMatrix, ArrayGeometry, LosSet)> {
        let los = LosSet::new(self.los.clone(), self.wavelength)?;
        let h = crate::obs_model::build_design_matrix(&los)?;
        let geometry = ArrayGeometry::new(self.xb.clone())?;
        let (q_phase, q_code) = build_dd_covariance(
            sigma_phase_m,
            sigma_phase_m * variance_ratio.sqrt(),
            los.num_dd_rows(),
            geometry.num_baselines(),
            self.wavelength,
        )?;
        let epoch = DdEpoch::new(self.phase.clone(), self.code.clone(), q_phase, q_code)?;
        Ok((epoch, h, geometry, los))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_text() -> String {
        concat!(
            "# sample epoch\n",
            "lambda 1.9029367279836487e-1\n",
            "sats 5\n",
            "baselines 1\n",
            "xb 1.0\n",
            "los 0 0.0 0.0 1.0\n",
            "los 1 0.8 0.0 0.6\n",
            "los 2 0.0 0.8 0.6\n",
            "los 3 -0.8 0.0 0.6\n",
            "los 4 0.0 -0.8 0.6\n",
            "dd 1 1 12.25 12.5\n",
            "dd 1 2 -3.5 -3.25\n",
            "dd 1 3 7.125 7.0\n",
            "dd 1 4 0.875 1.0\n",
            "ntrue 1 1 12\n",
            "ntrue 1 2 -4\n",
            "ntrue 1 3 7\n",
            "ntrue 1 4 1\n",
        )
        .to_string()
    }

    #[test]
    fn parse_and_round_trip() {
        let parsed = EpochFile::parse(&sample_text()).unwrap();
        assert_eq!(parsed.los.len(), 5);
        assert_eq!(parsed.phase[(0, 0)], 12.25);
        assert_eq!(parsed.n_true.as_ref().unwrap()[(1, 0)], -4);
        let once = parsed.serialize();
        let reparsed = EpochFile::parse(&once).unwrap();
        assert_eq!(once, reparsed.serialize(), "serialize is idempotent");
        assert_eq!(parsed.phase, reparsed.phase);
        assert_eq!(parsed.code, reparsed.code);
        assert_eq!(parsed.los, reparsed.los);
    }

    #[test]
    fn errors_cite_line_numbers() {
        let bad = sample_text().replace("los 2 0.0 0.8 0.6", "los 2 0.0 birds 0.6");
        match EpochFile::parse(&bad) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 8);
                assert!(message.contains("los y"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_dd_rejected() {
        let bad: String = sample_text()
            .lines()
            .filter(|l| !l.starts_with("dd 1 3"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(EpochFile::parse(&bad).is_err());
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let bad = sample_text().replace("dd 1 4", "dd 2 4");
        match EpochFile::parse(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
