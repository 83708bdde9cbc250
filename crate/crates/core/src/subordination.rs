pub enum BernsteinFunction { Identity }
