use super::Partition;
use crate::error::{Error, Result};

/// The JSD partition wins when fewer than this fraction of its clean samples
/// are also PSDC-clean.
pub const HYBRID_AGREEMENT_THRESHOLD: f64 = 0.8;

/// Returns the JSD partition if `|clean_psdc ∩ clean_jsd| < 0.8 |clean_jsd|`,
/// otherwise the PSDC partition. The chosen copy carries the agreement ratio
/// (`None` when the JSD clean set is empty).
pub fn hybrid_select(psdc: &Partition, jsd: &Partition) -> Result<Partition> {
    if psdc.len() != jsd.len() {
        return Err(Error::validation(format!(
            "partitions cover {} and {} samples",
            psdc.len(),
            jsd.len()
        )));
    }
    let psdc_mask = psdc.clean_mask();
    let joint = jsd.clean().iter().filter(|&&i| psdc_mask[i]).count();
    let j = jsd.clean().len();
    let fallback = (joint as f64) < HYBRID_AGREEMENT_THRESHOLD * j as f64;
    let mut chosen = if fallback { jsd.clone() } else { psdc.clone() };
    chosen.agreement_ratio = (j > 0).then(|| joint as f64 / j as f64);
    Ok(chosen)
}
