# navsim package
