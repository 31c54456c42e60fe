//! Inferential statistics: one-way ANOVA, Tukey HSD, random-intercept
//! mixed models fitted by REML, and marginal-mean contrasts.

mod anova;
mod design;
mod emm;
pub mod linalg;
mod lmm;
pub mod ptukey;
pub mod quad;
pub mod special;
mod tukey;

pub use anova::{anova_grouped, anova_oneway, AnovaResult, GroupedSample};
pub use design::{Covariate, Design, DesignBuilder, FactorCoding, INTERCEPT};
pub use emm::{emm_contrasts, EmmContrast, Z_975};
pub use lmm::{fit_at_ratio, fit_lmm_reml, group_labels, ols, Coefficient, MixedModelFit, RATIO_MAX, RATIO_MIN};
pub use tukey::{tukey_grouped, tukey_hsd, TukeyPair, TukeyResult};
