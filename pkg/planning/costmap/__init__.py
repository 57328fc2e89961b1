# costmap package
