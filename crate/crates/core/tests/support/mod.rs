pub mod expr_oracle;
