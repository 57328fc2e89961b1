# nmpc package
