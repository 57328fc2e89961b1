# mpnet package
