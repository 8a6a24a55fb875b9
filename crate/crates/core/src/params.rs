//! Parameter system and its solver.

use serde::{Deserialize, Serialize};

use crate::rat::Rat;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet {
    pub q: i64,
    pub kappa: i64,
    pub nu: i64,
    pub theta: Rat,
    pub xi: Rat,
    pub delta: Rat,
    pub sigma: Rat,
    pub rho1: Rat,
    pub rho2: Rat,
    /// True when the full inequality system holds; false marks a toy set.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamError {
    #[error("xi must satisfy 2/3 < xi < 1, got {0}")]
    XiRange(Rat),
    #[error("kappa must be at least 12, got {0}")]
    KappaRange(i64),
    #[error("parameter set violates: {0}")]
    Invalid(String),
}

/// Smallest integer strictly greater than `r`.
fn above(r: Rat) -> i64 {
    i64::try_from(r.next_int_above()).expect("parameter out of range")
}

pub fn solve_params(xi: Rat, kappa: i64) -> Result<ParamSet, ParamError> {
    if !(xi > Rat::new(2, 3) && xi < Rat::ONE) {
        return Err(ParamError::XiRange(xi));
    }
    if kappa < 12 {
        return Err(ParamError::KappaRange(kappa));
    }
    let one_minus = Rat::ONE - xi;
    let q = above(Rat::int(2 * kappa as i128) / one_minus);
    let rho1 = Rat::int(above(Rat::int(22 * q as i128) / one_minus) as i128);
    let rho2 = Rat::int(8);
    let nu = 17 * q;
    let theta = Rat::int(2) * (Rat::int(6) + Rat::int(3) * rho1);
    let delta = Rat::half() * (one_minus / Rat::int(6)).min((xi - Rat::new(2, 3)) / Rat::from(q));
    let sigma = Rat::half()
        * (delta / (Rat::int(3) * Rat::from(nu) * theta)).min(Rat::ONE / (Rat::int(2) * rho1));
    let p = ParamSet { q, kappa, nu, theta, xi, delta, sigma, rho1, rho2, valid: true };
    let bad = p.violations();
    if !bad.is_empty() {
        return Err(ParamError::Invalid(bad.join("; ")));
    }
    Ok(p)
}

impl ParamSet {
    /// Every inequality of the parameter system that fails, as readable text.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                v.push(what.to_string());
            }
        };
        let one = Rat::ONE;
        let q = Rat::from(self.q);
        let kappa = Rat::from(self.kappa);
        check(self.xi > Rat::new(2, 3) && self.xi < one, "2/3 < xi < 1");
        check(self.delta > Rat::ZERO && self.delta < self.xi / Rat::int(2), "0 < delta < xi/2");
        check(self.rho1 > self.rho2 && self.rho2 > Rat::ZERO, "rho1 > rho2 > 0");
        check(self.nu == 17 * self.q, "nu = 17Q");
        check(self.kappa >= 12, "kappa >= 12");
        check(q > Rat::int(2) * kappa / (one - self.xi), "Q > 2 kappa/(1-xi)");
        check(self.rho2 == Rat::int(8), "rho2 = 8");
        check(self.rho1 > Rat::int(22) * q / (one - self.xi), "rho1 > 22Q/(1-xi)");
        check(self.theta == Rat::int(2) * (Rat::int(6) + Rat::int(3) * self.rho1), "theta = 2(6+3 rho1)");
        check(
            self.delta < ((one - self.xi) / Rat::int(6)).min((self.xi - Rat::new(2, 3)) / q),
            "delta < min((1-xi)/6, (xi-2/3)/Q)",
        );
        check(
            self.sigma > Rat::ZERO
                && self.sigma
                    < (self.delta / (Rat::int(3) * Rat::from(self.nu) * self.theta))
                        .min(one / (Rat::int(2) * self.rho1)),
            "0 < sigma < min(delta/(3 nu theta), 1/(2 rho1))",
        );
        v
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// A relaxed set for interactive play and demos. Not covered by the
    /// lemmas; marked `valid = false` regardless of the numbers.
    pub fn toy(q: i64, kappa: i64, xi: Rat, delta: Rat, sigma: Rat, rho1: Rat) -> ParamSet {
        ParamSet {
            q,
            kappa,
            nu: 17 * q,
            theta: Rat::int(2) * (Rat::int(6) + Rat::int(3) * rho1),
            xi,
            delta,
            sigma,
            rho1,
            rho2: Rat::int(8),
            valid: false,
        }
    }

    /// Default toy set: small colonies and a visible devil budget.
    pub fn default_toy() -> ParamSet {
        ParamSet::toy(15, 4, Rat::new(3, 4), Rat::new(1, 100), Rat::new(1, 20), Rat::int(40))
    }

    /// Accepts the set if valid; otherwise only when `allow_toy` is set, in
    /// which case it is returned with the toy flag.
    pub fn checked(mut self, allow_toy: bool) -> Result<ParamSet, ParamError> {
        let bad = self.violations();
        if bad.is_empty() {
            self.valid = true;
            Ok(self)
        } else if allow_toy {
            self.valid = false;
            Ok(self)
        } else {
            Err(ParamError::Invalid(bad.join("; ")))
        }
    }

    /// Plain-text `key = value` rendering, one parameter per line.
    pub fn to_text(&self) -> String {
        format!(
            "Q = {}\nkappa = {}\nnu = {}\ntheta = {}\nxi = {}\ndelta = {}\nsigma = {}\nrho1 = {}\nrho2 = {}\nvalid = {}\n",
            self.q, self.kappa, self.nu, self.theta, self.xi, self.delta, self.sigma, self.rho1, self.rho2, self.valid
        )
    }

    pub fn from_text(text: &str) -> Result<ParamSet, ParamError> {
        let mut p = ParamSet::default_toy();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ParamError::Invalid(format!("expected key = value: {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let rat = || v.parse::<Rat>().map_err(|e| ParamError::Invalid(e.to_string()));
            let int = || v.parse::<i64>().map_err(|e| ParamError::Invalid(format!("{k}: {e}")));
            match k {
                "Q" | "q" => p.q = int()?,
                "kappa" => p.kappa = int()?,
                "nu" => p.nu = int()?,
                "theta" => p.theta = rat()?,
                "xi" => p.xi = rat()?,
                "delta" => p.delta = rat()?,
                "sigma" => p.sigma = rat()?,
                "rho1" => p.rho1 = rat()?,
                "rho2" => p.rho2 = rat()?,
                "valid" => p.valid = v == "true",
                _ => return Err(ParamError::Invalid(format!("unknown key {k:?}"))),
            }
        }
        if p.valid && !p.is_valid() {
            return Err(ParamError::Invalid(p.violations().join("; ")));
        }
        Ok(p)
    }
}
