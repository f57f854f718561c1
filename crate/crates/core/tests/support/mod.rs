pub mod fock;
