# kinoplan shared utilities package
