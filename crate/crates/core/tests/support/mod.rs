pub mod lp_oracle;
pub mod kalman;
