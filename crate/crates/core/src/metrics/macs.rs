use crate::error::{Error, Result};
use crate::model::{LayerProvider, Level, Network, ParamRole, ProviderKind};
use crate::tensor::{Scalar, Tensor};

/// Per-layer filter-space cost as literally written for FTN:
/// `K_H·K_W·C_in·(C_out/G)·N`.
///
/// The count is one factor of `C_out` short of what a grouped 1×1 conv over
/// the `C_out` axis actually performs; [`macs_instrumented`] reports both.
pub fn macs_paper_ftn(
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
    groups: usize,
    depth: usize,
) -> Result<u64> {
    if groups == 0 || c_out % groups != 0 {
        return Err(Error::Config(format!(
            "groups {groups} must divide C_out {c_out}"
        )));
    }
    Ok((kh * kw * c_in * (c_out / groups) * depth) as u64)
}

/// Cost of tuning on feature maps with a full K×K convolution per layer.
pub fn macs_feature_tuning(h: usize, w: usize, kh: usize, kw: usize, c_in: usize, c_out: usize) -> u64 {
    (h * w * kh * kw * c_in * c_out) as u64
}

/// Cost of a depthwise K×K modulation of a layer's output feature maps.
pub fn macs_adafm_feature(h: usize, w: usize, kh: usize, kw: usize, c_out: usize) -> u64 {
    (h * w * kh * kw * c_out) as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacsRow {
    pub component: String,
    pub macs: u64,
    /// Added MACs relative to the baseline row, in percent.
    pub overhead_pct: f64,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacsReport {
    pub height: usize,
    pub width: usize,
    pub baseline: u64,
    pub rows: Vec<MacsRow>,
}

impl MacsReport {
    fn new(height: usize, width: usize, baseline: u64, params: usize) -> Self {
        MacsReport {
            height,
            width,
            baseline,
            rows: vec![MacsRow {
                component: "baseline".into(),
                macs: baseline,
                overhead_pct: 0.0,
                params,
            }],
        }
    }

    /// Added cost `macs` on top of the baseline.
    fn push(&mut self, component: impl Into<String>, macs: u64, params: usize) {
        self.rows.push(MacsRow {
            component: component.into(),
            macs,
            overhead_pct: 100.0 * macs as f64 / self.baseline as f64,
            params,
        });
    }

    pub fn row(&self, component: &str) -> Option<&MacsRow> {
        self.rows.iter().find(|r| r.component == component)
    }

    /// Append rows of `other` whose component is not present yet.
    pub fn merge(&mut self, other: &MacsReport) -> Result<()> {
        if other.baseline != self.baseline {
            return Err(Error::Config(format!(
                "cannot merge MACs reports with baselines {} and {}",
                self.baseline, other.baseline
            )));
        }
        for r in &other.rows {
            if self.row(&r.component).is_none() {
                self.rows.push(r.clone());
            }
        }
        Ok(())
    }

    /// `component,macs,overhead_pct,params`; `macs` of non-baseline rows is
    /// the added cost.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,macs,overhead_pct,params\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.6},{}\n", r.component, r.macs, r.overhead_pct, r.params));
        }
        s
    }
}

/// Name of the row holding a provider's instrumented count.
pub(crate) fn provider_label(kind: ProviderKind) -> String {
    match kind {
        ProviderKind::Plain => "plain".into(),
        ProviderKind::Ftn(c) => format!("ftn_g{}_n{}", c.groups, c.depth),
        ProviderKind::AdaFm => "adafm_filters".into(),
    }
}

/// Count one forward pass of an `h`×`w` single image, once at α=0 (the
/// baseline, since providers are skipped lazily) and once at α=0.5.
///
/// Rows: baseline, the attached provider's exact overhead (and for FTN the
/// literal formula alongside), then the AdaFM-style and feature-map tuning
/// cost models for the same topology.
pub fn macs_instrumented<T: Scalar>(net: &Network<T>, h: usize, w: usize) -> Result<MacsReport> {
    if h == 0 || w == 0 {
        return Err(Error::Config("MACs image extents must be positive".into()));
    }
    let spec = net.spec();
    let x = Tensor::<T>::zeros([1, spec.in_channels, h, w]);
    let (_, base) = net.forward_counted(&x, Level::Global(0.0))?;
    let mut report = MacsReport::new(h, w, base.total(), net.param_count(ParamRole::Main));

    let kind = net.provider_config().kind;
    if kind != ProviderKind::Plain {
        let (_, tuned) = net.forward_counted(&x, Level::Global(0.5))?;
        let label = provider_label(kind);
        let params = net.param_count(ParamRole::Tuning);
        report.push(format!("{label}_exact"), tuned.total() - base.total(), params);
        if let ProviderKind::Ftn(_) = kind {
            let mut paper = 0;
            for layer in net.layers() {
                if let LayerProvider::Ftn { layer: ftn, .. } = &layer.provider {
                    let (kh, kw) = layer.base.kernel();
                    paper += macs_paper_ftn(
                        kh,
                        kw,
                        layer.base.c_in(),
                        layer.base.c_out(),
                        ftn.groups(),
                        ftn.depth(),
                    )?;
                }
            }
            report.push(format!("{label}_formula"), paper, params);
        }
    }

    let shapes = spec.conv_shapes();
    let last = shapes.len() - 1;
    let (mut ada, mut ada_params, mut feat, mut feat_params) = (0, 0, 0, 0);
    for (i, s) in shapes.iter().enumerate() {
        let k = s.kernel;
        if i != last {
            ada += macs_adafm_feature(h, w, k, k, s.c_out);
            ada_params += k * k * s.c_out + s.c_out;
        }
        feat += macs_feature_tuning(h, w, k, k, s.c_in, s.c_out);
        feat_params += k * k * s.c_in * s.c_out + s.c_out;
    }
    report.push("adafm_model", ada, ada_params);
    report.push("feature_tuning_model", feat, feat_params);
    Ok(report)
}
