# dataset package
