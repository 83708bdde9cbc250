pub enum SingleSiteProfile {}
pub enum DisorderLaw {}
pub struct DisorderSample;
