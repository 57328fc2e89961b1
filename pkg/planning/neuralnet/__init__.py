# neuralnet package
