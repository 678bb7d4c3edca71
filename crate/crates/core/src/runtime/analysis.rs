//! Weight-distribution tables, effective bit-widths and compression ratios
//! for quantized models.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::{encoded_bits, QuantizedModel};
use crate::nn::LayerSpec;
use crate::quant::exact_power_of_two;

/// Display names for learnable layers: `Conv1, Conv2, ..., FC1, FC2, ...`.
pub fn layer_names(specs: impl IntoIterator<Item = LayerSpec>) -> Vec<String> {
    let (mut conv, mut fc) = (0, 0);
    specs
        .into_iter()
        .filter_map(|s| match s {
            LayerSpec::Conv2d { .. } => {
                conv += 1;
                Some(format!("Conv{conv}"))
            }
            LayerSpec::Dense { .. } => {
                fc += 1;
                Some(format!("FC{fc}"))
            }
            _ => None,
        })
        .collect()
}

/// Row order of the distribution table: negative levels from the smallest
/// magnitude up, then zero, then positive levels from the smallest up.
fn table_order(a: f64, b: f64) -> Ordering {
    let group = |v: f64| if v < 0.0 { 0 } else if v == 0.0 { 1 } else { 2 };
    group(a)
        .cmp(&group(b))
        .then(a.abs().total_cmp(&b.abs()))
}

fn normalized(v: f64) -> u64 {
    (v + 0.0).to_bits()
}

/// Each distinct value with its count, in table row order.
pub fn level_counts(weights: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted: Vec<f64> = weights.iter().map(|&v| v + 0.0).collect();
    sorted.sort_by(|&a, &b| table_order(a, b));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, n)) if normalized(*last) == normalized(v) => *n += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Minimal fixed-length code width for the distinct values in `weights`.
pub fn effective_bitwidth(weights: &[f64]) -> u32 {
    let distinct: BTreeSet<u64> = weights.iter().map(|&v| normalized(v)).collect();
    match distinct.len() {
        0 | 1 => 0,
        d => usize::BITS - (d - 1).leading_zeros(),
    }
}

/// `2^k` as `2^k`, `-2^k` as `-2^k`, anything else in decimal.
pub fn level_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    match exact_power_of_two(v) {
        Some(k) if v < 0.0 => format!("-2^{k}"),
        Some(k) => format!("2^{k}"),
        None => format!("{v}"),
    }
}

/// A percentage in the style `5.04%`, `0.002%`, `3e-4%`.
pub fn format_percent(p: f64) -> String {
    if p >= 0.01 || p == 0.0 {
        format!("{p:.2}%")
    } else if p >= 0.001 {
        format!("{p:.3}%")
    } else {
        format!("{p:.0e}%")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub layers: Vec<String>,
    /// Row levels, in table order.
    pub levels: Vec<f64>,
    /// `counts[layer][row]`.
    pub counts: Vec<Vec<usize>>,
    pub totals: Vec<usize>,
    pub bitwidths: Vec<u32>,
}

impl DistributionTable {
    pub fn from_layers(names: Vec<String>, layers: &[Vec<f64>]) -> Result<Self> {
        if names.len() != layers.len() {
            return Err(Error::Shape(format!(
                "{} names for {} layers",
                names.len(),
                layers.len()
            )));
        }
        let per_layer: Vec<Vec<(f64, usize)>> = layers.iter().map(|w| level_counts(w)).collect();
        let mut levels: Vec<f64> = per_layer.iter().flatten().map(|&(v, _)| v).collect();
        levels.sort_by(|&a, &b| table_order(a, b));
        levels.dedup_by(|a, b| normalized(*a) == normalized(*b));
        let counts = per_layer
            .iter()
            .map(|lc| {
                levels
                    .iter()
                    .map(|&lv| {
                        lc.iter()
                            .find(|&&(v, _)| normalized(v) == normalized(lv))
                            .map_or(0, |&(_, n)| n)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            layers: names,
            levels,
            counts,
            totals: layers.iter().map(Vec::len).collect(),
            bitwidths: layers.iter().map(|w| effective_bitwidth(w)).collect(),
        })
    }

    pub fn percent(&self, layer: usize, row: usize) -> f64 {
        let total = self.totals[layer];
        if total == 0 {
            return 0.0;
        }
        100.0 * self.counts[layer][row] as f64 / total as f64
    }

    pub fn percent_sum(&self, layer: usize) -> f64 {
        (0..self.levels.len()).map(|r| self.percent(layer, r)).sum()
    }

    fn cell(&self, layer: usize, row: usize) -> String {
        if self.counts[layer][row] == 0 {
            "-".into()
        } else {
            format_percent(self.percent(layer, row))
        }
    }

    fn grid(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::with_capacity(self.levels.len() + 3);
        let mut head = vec!["Weight".to_string()];
        head.extend(self.layers.iter().cloned());
        rows.push(head);
        for (r, &lv) in self.levels.iter().enumerate() {
            let mut row = vec![level_label(lv)];
            row.extend((0..self.layers.len()).map(|l| self.cell(l, r)));
            rows.push(row);
        }
        let mut total = vec!["Total".to_string()];
        total.extend((0..self.layers.len()).map(|l| format_percent(self.percent_sum(l))));
        rows.push(total);
        let mut bw = vec!["Bit-width".to_string()];
        bw.extend(self.bitwidths.iter().map(u32::to_string));
        rows.push(bw);
        rows
    }

    /// Aligned plain-text rendering.
    pub fn render(&self) -> String {
        render_rows(&self.grid())
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.grid())
    }
}

fn render_rows(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn rows_to_csv(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Malformed(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 cells"))
}

pub fn distribution(model: &QuantizedModel) -> Result<DistributionTable> {
    let layers = model
        .quantized_layers()
        .iter()
        .map(|q| Ok(q.weights()?.into_data()))
        .collect::<Result<Vec<_>>>()?;
    let names = layer_names(model.quantized_layers().iter().map(|q| q.spec));
    DistributionTable::from_layers(names, &layers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCompression {
    pub name: String,
    pub count: usize,
    pub zeros: usize,
    pub bits: u32,
    pub encoded_bits: usize,
    /// `32 * count / encoded_bits` under the variable-length code.
    pub variable_ratio: f64,
    /// `32 / b`: every weight stored with `b` bits.
    pub fixed_ratio: f64,
}

impl LayerCompression {
    pub fn new(name: impl Into<String>, count: usize, zeros: usize, bits: u32) -> Self {
        let encoded = encoded_bits(zeros, count, bits);
        Self {
            name: name.into(),
            count,
            zeros,
            bits,
            encoded_bits: encoded,
            variable_ratio: (32 * count) as f64 / encoded as f64,
            fixed_ratio: (32 * count) as f64 / (count * bits as usize) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub layers: Vec<LayerCompression>,
    /// Whole-model totals; `bits` is the largest per-layer width.
    pub total: LayerCompression,
}

impl CompressionReport {
    pub fn from_layers(layers: Vec<LayerCompression>) -> Self {
        let count: usize = layers.iter().map(|l| l.count).sum();
        let encoded: usize = layers.iter().map(|l| l.encoded_bits).sum();
        let fixed: usize = layers.iter().map(|l| l.count * l.bits as usize).sum();
        let total = LayerCompression {
            name: "Total".into(),
            count,
            zeros: layers.iter().map(|l| l.zeros).sum(),
            bits: layers.iter().map(|l| l.bits).max().unwrap_or(0),
            encoded_bits: encoded,
            variable_ratio: (32 * count) as f64 / encoded as f64,
            fixed_ratio: (32 * count) as f64 / fixed as f64,
        };
        Self { layers, total }
    }

    fn grid(&self) -> Vec<Vec<String>> {
        let mut rows = vec![[
            "Layer",
            "Weights",
            "Zeros",
            "Bits",
            "Encoded bits",
            "Variable ratio",
            "Fixed ratio",
        ]
        .map(String::from)
        .to_vec()];
        for l in self.layers.iter().chain(std::iter::once(&self.total)) {
            rows.push(vec![
                l.name.clone(),
                l.count.to_string(),
                l.zeros.to_string(),
                l.bits.to_string(),
                l.encoded_bits.to_string(),
                format!("{:.2}x", l.variable_ratio),
                format!("{:.2}x", l.fixed_ratio),
            ]);
        }
        rows
    }

    pub fn render(&self) -> String {
        render_rows(&self.grid())
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.grid())
    }
}

pub fn compression_report(model: &QuantizedModel) -> CompressionReport {
    let names = layer_names(model.quantized_layers().iter().map(|q| q.spec));
    CompressionReport::from_layers(
        model
            .quantized_layers()
            .iter()
            .zip(names)
            .map(|(q, name)| LayerCompression::new(name, q.count, q.zero_count(), q.grid.bits()))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_example() {
        let lc = level_counts(&[0.25, 0.25, -0.5, 0.0]);
        assert_eq!(lc, vec![(-0.5, 1), (0.0, 1), (0.25, 2)]);
        let t = DistributionTable::from_layers(vec!["FC1".into()], &[vec![0.25, 0.25, -0.5, 0.0]])
            .unwrap();
        assert_eq!(t.percent(0, 0), 25.0);
        assert_eq!(t.percent(0, 2), 50.0);
        assert_eq!(t.percent_sum(0), 100.0);
    }

    #[test]
    fn row_order_follows_magnitude_within_sign() {
        let lc = level_counts(&[0.5, -0.25, 0.0, -0.5, 0.25]);
        let order: Vec<f64> = lc.iter().map(|&(v, _)| v).collect();
        assert_eq!(order, vec![-0.25, -0.5, 0.0, 0.25, 0.5]);
    }

    #[test]
    fn bitwidth_examples() {
        let fifteen: Vec<f64> = (0..15).map(f64::from).collect();
        assert_eq!(effective_bitwidth(&fifteen), 4);
        assert_eq!(effective_bitwidth(&[0.0, 0.5, 0.5]), 1);
        let seventeen: Vec<f64> = (0..17).map(f64::from).collect();
        assert_eq!(effective_bitwidth(&seventeen), 5);
        assert_eq!(effective_bitwidth(&[0.25; 3]), 0);
        assert_eq!(effective_bitwidth(&[0.0, -0.0]), 0);
    }

    #[test]
    fn percent_formats() {
        assert_eq!(format_percent(5.04), "5.04%");
        assert_eq!(format_percent(0.002), "0.002%");
        assert_eq!(format_percent(3e-4), "3e-4%");
        assert_eq!(format_percent(100.0), "100.00%");
    }

    #[test]
    fn labels() {
        assert_eq!(level_label(-0.00390625), "-2^-8");
        assert_eq!(level_label(0.5), "2^-1");
        assert_eq!(level_label(0.0), "0");
    }

    #[test]
    fn compression_examples() {
        let no_zeros = LayerCompression::new("a", 100, 0, 5);
        assert_eq!(no_zeros.fixed_ratio, 6.4);
        assert_eq!(no_zeros.variable_ratio, 6.4);
        let half = LayerCompression::new("b", 100, 50, 5);
        assert_eq!(half.variable_ratio, 32.0 / 3.0);
        let all = LayerCompression::new("c", 8, 8, 5);
        assert_eq!(all.variable_ratio, 32.0);
    }

    #[test]
    fn rendering_has_table_shape() {
        let t = DistributionTable::from_layers(
            vec!["Conv1".into(), "FC1".into()],
            &[vec![0.5, -0.5, 0.0, 0.0], vec![0.25, 0.25]],
        )
        .unwrap();
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Weight"));
        assert!(lines.iter().any(|l| l.starts_with("Total") && l.contains("100.00%")));
        assert!(lines.last().unwrap().starts_with("Bit-width"));
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("Weight,Conv1,FC1\n"));
        assert!(csv.contains("2^-2,-,100.00%"));
    }
}
