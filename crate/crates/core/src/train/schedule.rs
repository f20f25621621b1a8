/// Step decay: `lr0` halved after every `halve_every` updates.
pub fn lr_at(step: u64, lr0: f64, halve_every: u64) -> f64 {
    let halvings = step / halve_every.max(1);
    lr0 * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
}
