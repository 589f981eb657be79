use std::fmt;

use super::{BoundDecl, SystemDecl};

fn write_bounds(f: &mut fmt::Formatter<'_>, header: &str, list: &[BoundDecl]) -> fmt::Result {
    if list.is_empty() {
        return Ok(());
    }
    writeln!(f, "{header}:")?;
    for b in list {
        if b.lo == b.hi {
            writeln!(f, "  {} = {}", b.name, b.lo)?;
        } else {
            writeln!(f, "  {} in [{}, {}]", b.name, b.lo, b.hi)?;
        }
    }
    Ok(())
}

/// Model-file text; `parse_system` reads it back to an equal declaration.
impl fmt::Display for SystemDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.states.join(", "))?;
        if !self.inputs.is_empty() {
            writeln!(f, "inputs: {}", self.inputs.join(", "))?;
        }
        if !self.params.is_empty() {
            writeln!(f, "params:")?;
            for (n, e) in &self.params {
                writeln!(f, "  {n} = {e}")?;
            }
        }
        if !self.trig.is_empty() {
            writeln!(f, "trig:")?;
            for t in &self.trig {
                writeln!(f, "  {}, {} = sincos({})", t.sin, t.cos, t.arg)?;
            }
        }
        writeln!(f, "dynamics:")?;
        for (n, e) in &self.dynamics {
            writeln!(f, "  d{n}/dt = {e}")?;
        }
        write_bounds(f, "admissible", &self.admissible)?;
        write_bounds(f, "controls", &self.controls)?;
        if !self.unsafe_set.is_empty() {
            writeln!(f, "unsafe:")?;
            for g in &self.unsafe_set {
                writeln!(f, "  unsafe when {g} < 0")?;
            }
        }
        write_bounds(f, "init", &self.init)?;
        if !self.baseline.is_empty() {
            writeln!(f, "baseline:")?;
            for (n, e) in &self.baseline {
                writeln!(f, "  {n} = {e}")?;
            }
        }
        if !self.reference.is_empty() {
            writeln!(f, "reference:")?;
            for (n, e) in &self.reference {
                writeln!(f, "  {n} = {e}")?;
            }
        }
        Ok(())
    }
}
