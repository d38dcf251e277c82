# shared reservation table storage
