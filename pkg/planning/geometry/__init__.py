# geometry package
