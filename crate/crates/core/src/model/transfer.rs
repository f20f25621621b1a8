use super::{Checkpoint, Model};
use crate::error::{Error, Result};

/// Outcome of initialising a model from another model's checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferReport {
    /// Copied verbatim from the source.
    pub copied: Vec<String>,
    /// Kept at their fresh initialisation (absent in the source or with a
    /// different extent there).
    pub skipped: Vec<String>,
}

impl Model {
    /// Copies every parameter whose name and extent match `source`,
    /// typically a trained ×2 network seeding a ×3 or ×4 one. Scale-specific
    /// upsampler stages that do not line up keep their initialisation.
    ///
    /// Depth and width must agree; on error nothing is modified.
    pub fn transfer_from(&mut self, source: &Checkpoint) -> Result<TransferReport> {
        let (dst, src) = (&self.config, &source.config);
        if dst.num_blocks != src.num_blocks || dst.num_feats != src.num_feats {
            let offending = self
                .params
                .iter()
                .find_map(|(name, p)| {
                    let q = source.params.get(name)?;
                    (q.dims() != p.dims())
                        .then(|| format!("{name}: source {:?}, target {:?}", q.dims(), p.dims()))
                })
                .unwrap_or_else(|| {
                    format!(
                        "B={} F={} in source, B={} F={} in target",
                        src.num_blocks, src.num_feats, dst.num_blocks, dst.num_feats
                    )
                });
            return Err(Error::Transfer(format!(
                "source and target differ in depth or width; first mismatch {offending}"
            )));
        }

        let mut report = TransferReport::default();
        for (name, p) in self.params.iter() {
            match source.params.get(name) {
                Some(q) if q.dims() == p.dims() => report.copied.push(name.to_owned()),
                _ => report.skipped.push(name.to_owned()),
            }
        }
        for name in &report.copied {
            let value = source.params.get(name).expect("checked above").value.clone();
            self.params.get_mut(name).expect("own name").value = value;
        }
        Ok(report)
    }
}
