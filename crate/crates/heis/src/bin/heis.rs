fn main(){ println!("placeholder"); }
