use serde::{Deserialize, Serialize};

use super::{BarrierCertificate, CertifyError};
use crate::expr::parse_polynomial;
use crate::model::DynSystem;
use crate::poly::vars;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertFile {
    states: Vec<String>,
    h: String,
    gamma: f64,
    #[serde(default)]
    note: String,
}

impl BarrierCertificate {
    pub fn to_json(&self) -> String {
        crate::json::to_string(&CertFile {
            states: self.h.vars().to_vec(),
            h: self.h.to_string(),
            gamma: self.gamma,
            note: self.note.clone(),
        })
    }

    /// Reads either the JSON container or a bare expression in the state
    /// variables and parameters of `sys` (gain 1).
    pub fn from_text(text: &str, sys: &DynSystem) -> Result<Self, CertifyError> {
        if text.trim_start().starts_with('{') {
            let f: CertFile = serde_json::from_str(text).map_err(|e| CertifyError::Format(e.to_string()))?;
            let h = parse_polynomial(&f.h, &vars(&f.states)).map_err(|e| CertifyError::Format(e.to_string()))?;
            return Self::new(h.with_vars(sys.state_space())?, f.gamma, f.note);
        }
        let expr = text.lines().map(|l| l.split('#').next().unwrap_or("")).collect::<Vec<_>>().join(" ");
        let h = sys.state_poly(expr.trim()).map_err(|e| CertifyError::Format(e.to_string()))?;
        Self::new(h, 1.0, "")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_bare_forms() {
        let s = crate::model::builtin("m1", &[]).unwrap();
        let bare = BarrierCertificate::from_text("# band\n(band*vref)^2 - (v - vref)^2\n", &s).unwrap();
        let back = BarrierCertificate::from_text(&bare.to_json(), &s).unwrap();
        assert_eq!(bare, back);
        assert!(BarrierCertificate::from_text("v +", &s).is_err());
        assert!(BarrierCertificate::from_text("{\"states\": [\"v\"], \"h\": \"v\", \"gamma\": 0}", &s).is_err());
        assert!(BarrierCertificate::from_text("{\"states\": [\"w\"], \"h\": \"w\", \"gamma\": 1}", &s).is_err());
    }
}
