fn main() { let a: Vec<String> = std::env::args().collect(); synthfont::write_corpus(std::path::Path::new(&a[1]), a[2].parse().unwrap(), a[3].parse().unwrap()).unwrap(); }
