//! Text edge-list format.
//!
//! ```text
//! <model> <d> <L> <alpha> <tau> <lambda> <seed> [kernel=exp] [origin=i,j,..]
//! w <index> <weight>
//! p <index> <x_1> .. <x_d>      (GIRG only)
//! e <u> <v>
//! c <u> <v> <cost>
//! ```
//!
//! Reals are written with 17 significant digits; blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::estimators::Process;
use crate::kernels::{KernelVariant, ModelParams};
use crate::sampler::{BoxSpec, CffpField, CostMap, RateModel, SampledGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub process: Process,
    pub box_spec: BoxSpec,
    pub params: ModelParams,
    pub seed: u64,
    pub weights: Vec<f64>,
    /// Explicit positions, flattened; only GIRG files carry them.
    pub positions: Option<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub costs: Vec<((usize, usize), f64)>,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn process_name(p: Process) -> &'static str {
    match p {
        Process::Lrp => "lrp",
        Process::Sfp => "sfp",
        Process::Girg => "girg",
        Process::Cffp => "cffp",
    }
}

impl GraphFile {
    pub fn from_graph(graph: &SampledGraph, costs: Option<&CostMap>) -> Self {
        let process = match graph.model_tag {
            crate::sampler::ModelTag::Lrp => Process::Lrp,
            crate::sampler::ModelTag::Sfp => Process::Sfp,
            crate::sampler::ModelTag::Girg => Process::Girg,
        };
        GraphFile {
            process,
            box_spec: graph.box_spec.clone(),
            params: graph.params,
            seed: graph.seed,
            weights: graph.weights.clone(),
            positions: (process == Process::Girg).then(|| graph.positions_flat().to_vec()),
            edges: graph.edges().collect(),
            costs: costs.map(|c| c.iter().collect()).unwrap_or_default(),
        }
    }

    pub fn from_cffp(field: &CffpField, costs: &CostMap) -> Self {
        GraphFile {
            process: Process::Cffp,
            box_spec: field.box_spec.clone(),
            params: field.params,
            seed: field.seed,
            weights: field.weights.clone(),
            positions: None,
            edges: Vec::new(),
            costs: costs.iter().collect(),
        }
    }

    /// The graph described by the file; CFFP files have none.
    pub fn to_graph(&self) -> Result<SampledGraph> {
        let tag = self
            .process
            .graph_tag()
            .ok_or_else(|| Error::domain("a CFFP file holds costs, not a graph"))?;
        let positions = match &self.positions {
            Some(p) => p.clone(),
            None => {
                let n = self.weights.len();
                (0..n).flat_map(|i| self.box_spec.lattice_position(i)).collect()
            }
        };
        SampledGraph::from_parts(
            tag,
            self.box_spec.clone(),
            self.params,
            self.seed,
            self.weights.clone(),
            positions,
            self.edges.iter().copied(),
        )
    }

    /// The cost lines as a [`CostMap`], if there are any.
    pub fn cost_map(&self) -> Result<Option<CostMap>> {
        if self.costs.is_empty() {
            return Ok(None);
        }
        let model = if self.process == Process::Cffp {
            RateModel::CffpRate
        } else {
            RateModel::UnitRate
        };
        CostMap::from_pairs(model, self.weights.len(), self.costs.iter().copied()).map(Some)
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = write!(
            s,
            "{} {} {} {} {} {} {}",
            process_name(self.process),
            self.box_spec.d,
            self.box_spec.side,
            real(p.alpha),
            real(p.tau),
            real(p.lambda),
            self.seed
        );
        if p.kernel == KernelVariant::ExpForm {
            s.push_str(" kernel=exp");
        }
        if self.box_spec.origin.iter().any(|&o| o != 0) {
            let o: Vec<String> = self.box_spec.origin.iter().map(i64::to_string).collect();
            let _ = write!(s, " origin={}", o.join(","));
        }
        s.push('\n');
        for (i, &w) in self.weights.iter().enumerate() {
            let _ = writeln!(s, "w {i} {}", real(w));
        }
        if let Some(pos) = &self.positions {
            for (i, x) in pos.chunks(self.box_spec.d).enumerate() {
                let _ = write!(s, "p {i}");
                for &c in x {
                    let _ = write!(s, " {}", real(c));
                }
                s.push('\n');
            }
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(s, "e {u} {v}");
        }
        for &((u, v), c) in &self.costs {
            let _ = writeln!(s, "c {u} {v} {}", real(c));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() < 7 {
            return Err(perr(hline, "header needs `model d L alpha tau lambda seed`".into()));
        }
        let process: Process = tok[0].parse().map_err(|e: Error| perr(hline, e.to_string()))?;
        let d: usize = parse_num(tok[1], hline)?;
        let side: usize = parse_num(tok[2], hline)?;
        let alpha: f64 = parse_num(tok[3], hline)?;
        let tau: f64 = parse_num(tok[4], hline)?;
        let lambda: f64 = parse_num(tok[5], hline)?;
        let seed: u64 = parse_num(tok[6], hline)?;
        let mut kernel = KernelVariant::MinForm;
        let mut box_spec = BoxSpec::new(d, side).map_err(|e| perr(hline, e.to_string()))?;
        for extra in &tok[7..] {
            match extra.split_once('=') {
                Some(("kernel", "exp")) => kernel = KernelVariant::ExpForm,
                Some(("kernel", "min")) => kernel = KernelVariant::MinForm,
                Some(("origin", o)) => {
                    let origin = o.split(',').map(|x| parse_num(x, hline)).collect::<Result<Vec<i64>>>()?;
                    box_spec = box_spec.with_origin(origin).map_err(|e| perr(hline, e.to_string()))?;
                }
                _ => return Err(perr(hline, format!("unknown header token {extra:?}"))),
            }
        }
        let params = ModelParams {
            d,
            alpha,
            tau,
            lambda,
            kernel,
        };
        params.validate().map_err(|e| perr(hline, e.to_string()))?;
        let n = box_spec.vertex_count().map_err(|e| perr(hline, e.to_string()))?;

        let mut weights = vec![f64::NAN; n];
        let mut positions: Option<Vec<f64>> = None;
        let mut edges = Vec::new();
        let mut costs = Vec::new();
        let index = |s: &str, line: usize| -> Result<usize> {
            let i: usize = parse_num(s, line)?;
            if i >= n {
                return Err(perr(line, format!("vertex {i} out of range (n = {n})")));
            }
            Ok(i)
        };
        for (line, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            let arity = |k: usize| -> Result<()> {
                if f.len() != k {
                    return Err(perr(line, format!("`{}` line needs {} fields", f[0], k - 1)));
                }
                Ok(())
            };
            match f[0] {
                "w" => {
                    arity(3)?;
                    let i = index(f[1], line)?;
                    if !weights[i].is_nan() {
                        return Err(perr(line, format!("duplicate weight for vertex {i}")));
                    }
                    weights[i] = parse_num(f[2], line)?;
                }
                "p" => {
                    arity(2 + d)?;
                    let i = index(f[1], line)?;
                    let pos = positions.get_or_insert_with(|| vec![f64::NAN; n * d]);
                    for (c, s) in f[2..].iter().enumerate() {
                        pos[i * d + c] = parse_num(s, line)?;
                    }
                }
                "e" => {
                    arity(3)?;
                    edges.push((index(f[1], line)?, index(f[2], line)?));
                }
                "c" => {
                    arity(4)?;
                    costs.push(((index(f[1], line)?, index(f[2], line)?), parse_num(f[3], line)?));
                }
                other => return Err(perr(line, format!("unknown line kind {other:?}"))),
            }
        }
        if let Some(i) = weights.iter().position(|w| w.is_nan()) {
            return Err(perr(hline, format!("no weight line for vertex {i}")));
        }
        if positions.as_ref().is_some_and(|p| p.iter().any(|x| x.is_nan())) {
            return Err(perr(hline, "position lines must cover every vertex".into()));
        }
        if process == Process::Girg && positions.is_none() {
            return Err(perr(hline, "GIRG files need position lines".into()));
        }
        Ok(GraphFile {
            process,
            box_spec,
            params,
            seed,
            weights,
            positions,
            edges,
            costs,
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {s:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_fpp_costs, sample_graph, ModelTag};

    #[test]
    fn round_trip_sfp_with_costs() {
        let b = BoxSpec::new(2, 6).unwrap();
        let p = ModelParams::new(2, 1.4, 2.7, 0.8).unwrap();
        let g = sample_graph(&b, &p, ModelTag::Sfp, 11).unwrap();
        let c = sample_fpp_costs(&g, 11);
        let text = GraphFile::from_graph(&g, Some(&c)).to_text();
        let back = GraphFile::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        let g2 = back.to_graph().unwrap();
        assert_eq!(g2.weights, g.weights);
        assert_eq!(g2.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        let c2 = back.cost_map().unwrap().unwrap();
        assert_eq!(c2.iter().collect::<Vec<_>>(), c.iter().collect::<Vec<_>>());
    }

    #[test]
    fn round_trip_girg_positions() {
        let b = BoxSpec::new(1, 30).unwrap().with_origin(vec![-4]).unwrap();
        let p = ModelParams::new(1, 1.8, 3.5, 1.0).unwrap().with_kernel(KernelVariant::ExpForm);
        let g = sample_graph(&b, &p, ModelTag::Girg, 2).unwrap();
        let f = GraphFile::parse(&GraphFile::from_graph(&g, None).to_text()).unwrap();
        assert_eq!(f.params, p);
        assert_eq!(f.box_spec, b);
        assert_eq!(f.to_graph().unwrap().positions_flat(), g.positions_flat());
    }

    #[test]
    fn grid_edges_only() {
        let b = BoxSpec::new(1, 16).unwrap();
        let g = sample_graph(&b, &ModelParams::lrp(1, 1.5, 0.0).unwrap(), ModelTag::Lrp, 7).unwrap();
        let text = GraphFile::from_graph(&g, None).to_text();
        assert_eq!(text.lines().filter(|l| l.starts_with("e ")).count(), 15);
        assert!(text.starts_with("lrp 1 16 1.5000000000000000e0 inf 0.0000000000000000e0 7\n"));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let bad = "lrp 1 2 1.5 inf 0 1\nw 0 1\nw 1 1\ne 0 5\n";
        match GraphFile::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(GraphFile::parse("lrp 1 2 1.5 inf 0 1\nw 0 1\n").is_err());
        assert!(GraphFile::parse("foo 1 2 1.5 inf 0 1\n").is_err());
    }
}
